#include "stnlffm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

namespace stnlffm {

void SceneSpec::validate() const {
    if (width <= 0 || height <= 0 || band_count <= 0)
        throw config_error("scene dimensions must be positive");
    if (classes.empty())
        throw config_error("scene needs at least one class");
    if (resolution_ratio < 1)
        throw config_error("resolution_ratio must be >= 1");
    if (width % resolution_ratio != 0 || height % resolution_ratio != 0)
        throw config_error("scene dimensions must be divisible by resolution_ratio");
    if (feature_scale < 1)
        throw config_error("feature_scale must be >= 1");
    if (noise_sigma < 0.0 || coarse_noise_sigma < 0.0)
        throw config_error("noise sigma must be >= 0");
    for (const ClassTrajectory& c : classes) {
        if (c.knots.empty())
            throw config_error("every class needs at least one trajectory knot");
        for (const auto& k : c.knots)
            if (static_cast<int>(k.values.size()) != band_count)
                throw config_error("trajectory knot has wrong band count");
        for (std::size_t i = 1; i < c.knots.size(); ++i)
            if (c.knots[i].date <= c.knots[i - 1].date)
                throw config_error("trajectory knots must have increasing dates");
    }
    if (event) {
        if (static_cast<int>(event->delta.size()) != band_count)
            throw config_error("event delta has wrong band count");
        for (int c : event->classes)
            if (c < 0 || c >= static_cast<int>(classes.size()))
                throw config_error("event references an unknown class");
    }
}

SceneSpec scene_spec_from_json_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("malformed scene spec: ") + e.what());
    }
    SceneSpec spec;
    try {
        spec.width = j.at("width").get<int>();
        spec.height = j.at("height").get<int>();
        spec.band_count = j.at("bands").get<int>();
        for (const auto& jc : j.at("classes")) {
            ClassTrajectory c;
            for (const auto& jk : jc.at("knots")) {
                ClassTrajectory::Knot k;
                k.date = jk.at("date").get<double>();
                k.values = jk.at("values").get<std::vector<double>>();
                c.knots.push_back(std::move(k));
            }
            spec.classes.push_back(std::move(c));
        }
        const std::string mode = j.value("class_map", "checkerboard");
        if (mode == "checkerboard")
            spec.class_map_mode = ClassMapMode::checkerboard;
        else if (mode == "voronoi")
            spec.class_map_mode = ClassMapMode::voronoi_patches;
        else if (mode == "stripes")
            spec.class_map_mode = ClassMapMode::stripes;
        else
            throw config_error("unknown class_map '" + mode + "'");
        spec.feature_scale = j.value("feature_scale", 4);
        if (j.contains("event")) {
            AbruptEvent e;
            e.date = j["event"].at("date").get<double>();
            e.classes = j["event"].at("classes").get<std::vector<int>>();
            e.delta = j["event"].at("delta").get<std::vector<double>>();
            spec.event = std::move(e);
        }
        spec.noise_sigma = j.value("noise_sigma", 0.0);
        spec.coarse_noise_sigma = j.value("coarse_noise_sigma", 0.0);
        spec.resolution_ratio = j.value("resolution_ratio", 1);
        spec.pixel_size = j.value("pixel_size", 25.0f);
        spec.seed = j.value("seed", static_cast<std::uint64_t>(0));
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("scene spec is missing fields: ") + e.what());
    }
    spec.validate();
    return spec;
}

SceneSpec load_scene_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw io_error("cannot open scene spec " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return scene_spec_from_json_text(buf.str());
}

std::vector<int> build_class_map(const SceneSpec& spec) {
    spec.validate();
    const int n_classes = static_cast<int>(spec.classes.size());
    std::vector<int> map(static_cast<std::size_t>(spec.width) * spec.height);
    switch (spec.class_map_mode) {
    case ClassMapMode::checkerboard:
        for (int y = 0; y < spec.height; ++y)
            for (int x = 0; x < spec.width; ++x)
                map[static_cast<std::size_t>(y) * spec.width + x] =
                    (x / spec.feature_scale + y / spec.feature_scale) % n_classes;
        break;
    case ClassMapMode::stripes:
        for (int y = 0; y < spec.height; ++y)
            for (int x = 0; x < spec.width; ++x)
                map[static_cast<std::size_t>(y) * spec.width + x] =
                    (x / spec.feature_scale) % n_classes;
        break;
    case ClassMapMode::voronoi_patches: {
        // site density follows feature_scale; class = site index mod classes
        const int target_sites =
            std::max(n_classes, (spec.width * spec.height) /
                                    std::max(1, 4 * spec.feature_scale * spec.feature_scale));
        std::mt19937_64 gen(spec.seed ^ 0x5EEDC1A55ull);
        std::uniform_int_distribution<int> dx(0, spec.width - 1), dy(0, spec.height - 1);
        std::vector<std::pair<int, int>> sites(static_cast<std::size_t>(target_sites));
        for (auto& s : sites)
            s = {dx(gen), dy(gen)};
        for (int y = 0; y < spec.height; ++y) {
            for (int x = 0; x < spec.width; ++x) {
                long best = -1;
                int best_site = 0;
                for (std::size_t s = 0; s < sites.size(); ++s) {
                    const long ddx = sites[s].first - x;
                    const long ddy = sites[s].second - y;
                    const long d2 = ddx * ddx + ddy * ddy;
                    if (best < 0 || d2 < best) {
                        best = d2;
                        best_site = static_cast<int>(s);
                    }
                }
                map[static_cast<std::size_t>(y) * spec.width + x] = best_site % n_classes;
            }
        }
        break;
    }
    }
    return map;
}

double class_value(const SceneSpec& spec, int class_id, int band, double date) {
    const ClassTrajectory& c = spec.classes.at(static_cast<std::size_t>(class_id));
    double v;
    if (c.knots.size() == 1) {
        v = c.knots[0].values[band];
    } else {
        // segment bracketing the date; end segments extrapolate linearly
        std::size_t seg = 0;
        while (seg + 2 < c.knots.size() && c.knots[seg + 1].date <= date)
            ++seg;
        const auto& k0 = c.knots[seg];
        const auto& k1 = c.knots[seg + 1];
        const double t = (date - k0.date) / (k1.date - k0.date);
        v = k0.values[band] + t * (k1.values[band] - k0.values[band]);
    }
    if (spec.event && date >= spec.event->date) {
        for (int ec : spec.event->classes)
            if (ec == class_id) {
                v += spec.event->delta[band];
                break;
            }
    }
    return v;
}

RasterGrid render_truth(const SceneSpec& spec, double date) {
    spec.validate();
    const std::vector<int> class_map = build_class_map(spec);
    RasterGrid g;
    g.width = spec.width;
    g.height = spec.height;
    g.band_count = spec.band_count;
    g.pixel_size = spec.pixel_size;
    g.data.resize(g.value_count());
    g.valid.assign(g.pixel_count(), 1);
    const std::size_t n = g.pixel_count();
    for (int b = 0; b < spec.band_count; ++b) {
        // class values vary per (class, band, date) only
        std::vector<float> lut(spec.classes.size());
        for (std::size_t c = 0; c < spec.classes.size(); ++c)
            lut[c] = static_cast<float>(class_value(spec, static_cast<int>(c), b, date));
        float* plane = g.data.data() + static_cast<std::size_t>(b) * n;
        for (std::size_t i = 0; i < n; ++i)
            plane[i] = lut[class_map[i]];
    }
    return g;
}

std::string format_date_tag(double date) {
    if (date == std::floor(date) && std::fabs(date) < 1e15)
        return std::to_string(static_cast<long long>(date));
    std::ostringstream out;
    out << date;
    return out.str();
}

namespace {

void add_noise(RasterGrid& g, double sigma, std::uint64_t seed) {
    if (sigma <= 0.0)
        return;
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> dist(0.0, sigma);
    for (float& v : g.data)
        v = static_cast<float>(v + dist(gen));
}

} // namespace

std::vector<SynthFrame> generate_series(const SceneSpec& spec, const std::vector<double>& dates) {
    spec.validate();
    if (dates.empty())
        throw config_error("generate_series: no dates given");
    std::vector<SynthFrame> series;
    series.reserve(dates.size());
    for (std::size_t di = 0; di < dates.size(); ++di) {
        SynthFrame frame;
        frame.date_tag = format_date_tag(dates[di]);
        const RasterGrid truth = render_truth(spec, dates[di]);

        frame.fine = truth;
        add_noise(frame.fine, spec.noise_sigma, spec.seed * 0x9E3779B97F4A7C15ull + 2 * di + 1);

        RasterGrid coarse_src = truth;
        add_noise(coarse_src, spec.coarse_noise_sigma,
                  spec.seed * 0x9E3779B97F4A7C15ull + 2 * di + 2);
        if (spec.resolution_ratio > 1)
            frame.coarse = upsample_cubic(downsample_boxavg(coarse_src, spec.resolution_ratio),
                                          spec.resolution_ratio);
        else
            frame.coarse = std::move(coarse_src);
        series.push_back(std::move(frame));
    }
    return series;
}

// --- naive reference implementation ------------------------------------------
//
// Everything below is intentionally written as straight loops over the
// definitions, sharing only the data types and parameter structs with the
// optimized engine. It is the equivalence oracle for predict_image.

namespace {

struct OracleDate {
    const ReferencePair* pair;
    std::vector<double> tau; // per band
};

std::vector<double> oracle_thresholds(const RasterGrid& fine, const SimilarityParams& p) {
    std::vector<double> tau(fine.band_count);
    for (int b = 0; b < fine.band_count; ++b) {
        double sum = 0.0;
        long long count = 0;
        for (int y = 0; y < fine.height; ++y)
            for (int x = 0; x < fine.width; ++x)
                if (fine.valid_at(x, y)) {
                    sum += fine.at(x, y, b);
                    ++count;
                }
        const double mean = count ? sum / count : 0.0;
        double ss = 0.0;
        for (int y = 0; y < fine.height; ++y)
            for (int x = 0; x < fine.width; ++x)
                if (fine.valid_at(x, y)) {
                    const double d = fine.at(x, y, b) - mean;
                    ss += d * d;
                }
        const double sigma = count ? std::sqrt(ss / count) : 0.0;
        tau[b] = p.d * sigma * 2.0 / p.class_count;
    }
    return tau;
}

} // namespace

RasterGrid oracle_predict(const FusionTask& task, const FusionConfig& config) {
    config.validate();
    task.validate();

    const RasterGrid& coarse_p = task.coarse_target;
    const int W = coarse_p.width, H = coarse_p.height, B = coarse_p.band_count;

    // canonical date order: by ordinal when all tags parse, else by tag
    std::vector<const ReferencePair*> refs;
    for (const ReferencePair& r : task.references)
        refs.push_back(&r);
    bool all_parse = true;
    for (const ReferencePair& r : task.references) {
        try {
            date_ordinal(r.date_tag);
        } catch (const config_error&) {
            all_parse = false;
        }
    }
    std::sort(refs.begin(), refs.end(), [&](const ReferencePair* a, const ReferencePair* b) {
        if (all_parse) {
            const double da = date_ordinal(a->date_tag), db = date_ordinal(b->date_tag);
            if (da != db)
                return da < db;
        }
        return a->date_tag < b->date_tag;
    });

    std::vector<OracleDate> dates;
    for (const ReferencePair* r : refs)
        dates.push_back({r, oracle_thresholds(r->fine, config.similarity)});

    // Gaussian patch kernel, normalized over the full patch
    const int pr = config.weights.patch_size / 2;
    std::vector<double> gk(static_cast<std::size_t>(config.weights.patch_size) *
                           config.weights.patch_size);
    {
        double sum = 0.0;
        for (int dy = -pr; dy <= pr; ++dy)
            for (int dx = -pr; dx <= pr; ++dx) {
                const double w = std::exp(-(dx * dx + dy * dy) /
                                          (2.0 * config.weights.kernel_sigma * config.weights.kernel_sigma));
                gk[static_cast<std::size_t>(dy + pr) * config.weights.patch_size + (dx + pr)] = w;
                sum += w;
            }
        for (double& w : gk)
            w /= sum;
    }

    RasterGrid out;
    out.width = W;
    out.height = H;
    out.band_count = B;
    out.pixel_size = task.references.front().fine.pixel_size;
    out.data.assign(out.value_count(), 0.0f);
    out.valid.assign(out.pixel_count(), 0);

    const int sr = config.similarity.search_window / 2;
    const int wr = config.weights.whole_window / 2;

    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            if (!coarse_p.valid_at(x, y))
                continue;
            std::vector<const OracleDate*> active;
            for (const OracleDate& d : dates)
                if (d.pair->fine.valid_at(x, y) && d.pair->coarse.valid_at(x, y))
                    active.push_back(&d);
            if (active.empty())
                continue;

            // similar pixels per date
            std::vector<std::vector<std::pair<int, int>>> members(active.size());
            for (std::size_t k = 0; k < active.size(); ++k) {
                const RasterGrid& fine = active[k]->pair->fine;
                const RasterGrid& coarse = active[k]->pair->coarse;
                const std::vector<double>& tau = active[k]->tau;
                struct Cand {
                    int x, y;
                    long scan;
                    double dist;
                };
                std::vector<Cand> cands;
                for (int cy = std::max(0, y - sr); cy <= std::min(H - 1, y + sr); ++cy) {
                    for (int cx = std::max(0, x - sr); cx <= std::min(W - 1, x + sr); ++cx) {
                        if (cx == x && cy == y)
                            continue;
                        if (!fine.valid_at(cx, cy) || !coarse.valid_at(cx, cy) ||
                            !coarse_p.valid_at(cx, cy))
                            continue;
                        bool ok = true;
                        double dist = 0.0;
                        for (int b = 0; b < B && ok; ++b) {
                            const double df = std::fabs(fine.at(cx, cy, b) - fine.at(x, y, b));
                            if (df > tau[b])
                                ok = false;
                            dist += df;
                        }
                        for (int b = 0; b < B && ok; ++b) {
                            const double ci = std::fabs(coarse.at(cx, cy, b) - coarse_p.at(cx, cy, b));
                            const double ct = std::fabs(coarse.at(x, y, b) - coarse_p.at(x, y, b));
                            if (std::fabs(ci - ct) >= config.similarity.sigma_cc)
                                ok = false;
                        }
                        if (ok)
                            cands.push_back({cx, cy, static_cast<long>(cy) * W + cx, dist});
                    }
                }
                if (static_cast<int>(cands.size()) > config.similarity.cap - 1) {
                    std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
                        if (a.dist != b.dist)
                            return a.dist < b.dist;
                        return a.scan < b.scan;
                    });
                    cands.resize(config.similarity.cap - 1);
                }
                cands.push_back({x, y, static_cast<long>(y) * W + x, 0.0});
                std::sort(cands.begin(), cands.end(),
                          [](const Cand& a, const Cand& b) { return a.scan < b.scan; });
                for (const Cand& c : cands)
                    members[k].emplace_back(c.x, c.y);
            }

            for (int b = 0; b < B; ++b) {
                // whole weights
                std::vector<double> inv(active.size());
                double inv_total = 0.0;
                for (std::size_t k = 0; k < active.size(); ++k) {
                    const RasterGrid& coarse = active[k]->pair->coarse;
                    double s = 0.0;
                    for (int cy = std::max(0, y - wr); cy <= std::min(H - 1, y + wr); ++cy)
                        for (int cx = std::max(0, x - wr); cx <= std::min(W - 1, x + wr); ++cx)
                            if (coarse.valid_at(cx, cy) && coarse_p.valid_at(cx, cy))
                                s += std::fabs(static_cast<double>(coarse.at(cx, cy, b)) -
                                               static_cast<double>(coarse_p.at(cx, cy, b)));
                    inv[k] = 1.0 / (s + config.weights.epsilon);
                    inv_total += inv[k];
                }

                double value = 0.0;
                for (std::size_t k = 0; k < active.size(); ++k) {
                    const RasterGrid& fine = active[k]->pair->fine;
                    const RasterGrid& coarse = active[k]->pair->coarse;
                    const double whole = inv[k] / inv_total;

                    // individual weights
                    std::vector<double> ind(members[k].size());
                    for (std::size_t i = 0; i < members[k].size(); ++i) {
                        const auto [mx, my] = members[k][i];
                        double num = 0.0, den = 0.0;
                        for (int dy = -pr; dy <= pr; ++dy) {
                            for (int dx = -pr; dx <= pr; ++dx) {
                                const int ax = mx + dx, ay = my + dy;
                                const int tx = x + dx, ty = y + dy;
                                if (ax < 0 || ax >= W || ay < 0 || ay >= H || tx < 0 || tx >= W ||
                                    ty < 0 || ty >= H)
                                    continue;
                                if (!coarse.valid_at(ax, ay) || !coarse_p.valid_at(tx, ty))
                                    continue;
                                const double g =
                                    gk[static_cast<std::size_t>(dy + pr) * config.weights.patch_size +
                                       (dx + pr)];
                                double diff = std::fabs(static_cast<double>(coarse.at(ax, ay, b)) -
                                                        static_cast<double>(coarse_p.at(tx, ty, b)));
                                if (config.weights.squared_patch_distance)
                                    diff *= diff;
                                num += g * diff;
                                den += g;
                            }
                        }
                        const double dist = den > 0.0 ? num / den : 0.0;
                        ind[i] = std::exp(-dist / (config.weights.h * config.weights.h));
                    }
                    double ind_sum = 0.0;
                    for (double wv : ind)
                        ind_sum += wv;

                    // coefficients: uncentered normal equations via Cramer
                    double a_coef = 1.0, b_coef = 0.0;
                    if (config.mode == FusionMode::starfm_special_case) {
                        b_coef = static_cast<double>(coarse_p.at(x, y, b)) -
                                 static_cast<double>(coarse.at(x, y, b));
                    } else {
                        const std::size_t n = members[k].size();
                        double sk = 0.0, sp = 0.0, skk = 0.0, skp = 0.0;
                        for (const auto& [mx, my] : members[k]) {
                            const double ck = coarse.at(mx, my, b);
                            const double cp = coarse_p.at(mx, my, b);
                            sk += ck;
                            sp += cp;
                            skk += ck * ck;
                            skp += ck * cp;
                        }
                        const double mean_k = sk / static_cast<double>(n);
                        const double mean_p = sp / static_cast<double>(n);
                        const double var = skk / static_cast<double>(n) - mean_k * mean_k;
                        if (static_cast<int>(n) < config.regression.min_points ||
                            var < config.regression.variance_floor) {
                            a_coef = 1.0;
                            b_coef = mean_p - mean_k;
                        } else {
                            const double g = config.regression.gamma;
                            const double det = (skk + g) * static_cast<double>(n) - sk * sk;
                            a_coef = ((skp + g) * static_cast<double>(n) - sk * sp) / det;
                            b_coef = ((skk + g) * sp - sk * (skp + g)) / det;
                            if (a_coef < config.regression.a_min || a_coef > config.regression.a_max) {
                                a_coef = 1.0;
                                b_coef = mean_p - mean_k;
                            }
                        }
                    }

                    for (std::size_t i = 0; i < members[k].size(); ++i) {
                        const auto [mx, my] = members[k][i];
                        const double w = ind_sum > 0.0
                                             ? ind[i] / ind_sum * whole
                                             : whole / static_cast<double>(members[k].size());
                        value += w * (a_coef * static_cast<double>(fine.at(mx, my, b)) + b_coef);
                    }
                }
                out.at(x, y, b) = static_cast<float>(value);
            }
            out.valid[out.pixel_index(x, y)] = 1;
        }
    }
    return out;
}

} // namespace stnlffm
