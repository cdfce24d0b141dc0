#include "stnlffm/fusion.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <iostream>
#include <mutex>
#include <thread>

namespace stnlffm {

void FusionConfig::validate() const {
    similarity.validate();
    weights.validate();
    regression.validate();
    if (tile_size < 8)
        throw config_error("tile_size must be >= 8");
    if (thread_hint < 0)
        throw config_error("thread_hint must be >= 0");
    if (mode != FusionMode::stnlffm && mode != FusionMode::starfm_special_case)
        throw config_error("invalid fusion mode");
}

void FusionTask::validate() const {
    if (references.empty())
        throw geometry_error("fusion task has no reference pairs");
    validate_grid(coarse_target);
    for (const ReferencePair& ref : references) {
        validate_grid(ref.fine);
        validate_grid(ref.coarse);
        if (!same_geometry(ref.fine, ref.coarse) || !same_geometry(ref.fine, coarse_target))
            throw geometry_error("reference pair '" + ref.date_tag +
                                 "' does not share the task geometry");
        if (ref.date_tag == prediction_date_tag)
            throw config_error("prediction date tag '" + prediction_date_tag +
                               "' collides with a reference date");
    }
    for (std::size_t i = 0; i < references.size(); ++i)
        for (std::size_t j = i + 1; j < references.size(); ++j)
            if (references[i].date_tag == references[j].date_tag)
                throw config_error("duplicate reference date tag '" + references[i].date_tag + "'");
}

namespace {

// Canonical reference ordering: by ordinal date when every tag parses,
// otherwise lexicographic. Makes the prediction independent of the order
// the pairs were supplied in.
std::vector<int> canonical_order(const std::vector<ReferencePair>& refs) {
    std::vector<int> order(refs.size());
    for (std::size_t i = 0; i < refs.size(); ++i)
        order[i] = static_cast<int>(i);
    bool all_parse = true;
    std::vector<double> ordinals(refs.size(), 0.0);
    for (std::size_t i = 0; i < refs.size(); ++i) {
        try {
            ordinals[i] = date_ordinal(refs[i].date_tag);
        } catch (const config_error&) {
            all_parse = false;
            break;
        }
    }
    if (all_parse)
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            if (ordinals[a] != ordinals[b])
                return ordinals[a] < ordinals[b];
            return refs[a].date_tag < refs[b].date_tag;
        });
    else
        std::sort(order.begin(), order.end(),
                  [&](int a, int b) { return refs[a].date_tag < refs[b].date_tag; });
    return order;
}

// Summed-area table of the masked |C_k - C_p| image for one band;
// (width+1) x (height+1), row-major.
std::vector<double> build_change_sat(const RasterGrid& coarse_k, const RasterGrid& coarse_p,
                                     int band) {
    const int w = coarse_k.width;
    const int h = coarse_k.height;
    std::vector<double> sat(static_cast<std::size_t>(w + 1) * (h + 1), 0.0);
    for (int y = 0; y < h; ++y) {
        double row = 0.0;
        const std::size_t above = static_cast<std::size_t>(y) * (w + 1);
        const std::size_t here = static_cast<std::size_t>(y + 1) * (w + 1);
        for (int x = 0; x < w; ++x) {
            if (coarse_k.valid_at(x, y) && coarse_p.valid_at(x, y))
                row += std::fabs(static_cast<double>(coarse_k.at(x, y, band)) -
                                 static_cast<double>(coarse_p.at(x, y, band)));
            sat[here + x + 1] = sat[above + x + 1] + row;
        }
    }
    return sat;
}

double sat_window_sum(const std::vector<double>& sat, int width, int x, int y, int half,
                      int img_w, int img_h) {
    const int x0 = std::max(0, x - half);
    const int x1 = std::min(img_w - 1, x + half);
    const int y0 = std::max(0, y - half);
    const int y1 = std::min(img_h - 1, y + half);
    const std::size_t stride = static_cast<std::size_t>(width + 1);
    return sat[(y1 + 1) * stride + (x1 + 1)] - sat[static_cast<std::size_t>(y0) * stride + (x1 + 1)] -
           sat[(y1 + 1) * stride + x0] + sat[static_cast<std::size_t>(y0) * stride + x0];
}

struct DateContext {
    const ReferencePair* pair = nullptr;
    int date_index = 0;                    // position in the canonical order
    std::vector<double> thresholds;        // per band
    std::vector<std::vector<double>> sat;  // per band
};

struct EngineContext {
    const FusionTask* task = nullptr;
    const FusionConfig* config = nullptr;
    PatchKernel kernel;
    std::vector<DateContext> dates; // canonical order
    int width = 0, height = 0, bands = 0;

    EngineContext(const FusionTask& t, const FusionConfig& c)
        : task(&t), config(&c), kernel(c.weights.patch_size, c.weights.kernel_sigma) {
        width = t.coarse_target.width;
        height = t.coarse_target.height;
        bands = t.coarse_target.band_count;
        const std::vector<int> order = canonical_order(t.references);
        dates.resize(order.size());
        for (std::size_t k = 0; k < order.size(); ++k) {
            DateContext& d = dates[k];
            d.pair = &t.references[order[k]];
            d.date_index = static_cast<int>(k);
            d.thresholds = spectral_thresholds(d.pair->fine, c.similarity);
            d.sat.resize(bands);
            for (int b = 0; b < bands; ++b)
                d.sat[b] = build_change_sat(d.pair->coarse, t.coarse_target, b);
        }
    }
};

struct PixelStats {
    double max_weight_sum_error = 0.0;
    double max_abs_gain_deviation = 0.0;
    long long full_fits = 0;
    long long degenerate_fits = 0;
    long long predicted_pixels = 0;
    long long nodata_pixels = 0;

    void merge(const PixelStats& o) {
        max_weight_sum_error = std::max(max_weight_sum_error, o.max_weight_sum_error);
        max_abs_gain_deviation = std::max(max_abs_gain_deviation, o.max_abs_gain_deviation);
        full_fits += o.full_fits;
        degenerate_fits += o.degenerate_fits;
        predicted_pixels += o.predicted_pixels;
        nodata_pixels += o.nodata_pixels;
    }
};

// Predicts all bands of one pixel. Returns false for nodata. Summation order
// is fixed: dates in canonical order, members in scan order.
bool predict_pixel_values(const EngineContext& ctx, int x, int y, double* values,
                          PixelStats& stats) {
    const FusionTask& task = *ctx.task;
    const FusionConfig& config = *ctx.config;
    const RasterGrid& coarse_p = task.coarse_target;

    if (!coarse_p.valid_at(x, y))
        return false;

    std::vector<const DateContext*> active;
    active.reserve(ctx.dates.size());
    for (const DateContext& d : ctx.dates)
        if (d.pair->fine.valid_at(x, y) && d.pair->coarse.valid_at(x, y))
            active.push_back(&d);
    if (active.empty())
        return false;

    // one member set per date, shared by all bands
    std::vector<SimilarPixelSet> members(active.size());
    for (std::size_t k = 0; k < active.size(); ++k)
        members[k] = select_similar(x, y, active[k]->pair->fine, active[k]->pair->coarse, coarse_p,
                                    config.similarity, active[k]->thresholds, active[k]->date_index);

    std::vector<double> change_sums(active.size());
    std::vector<std::vector<double>> individual(active.size());
    std::vector<double> c_k_buf, c_p_buf;

    for (int b = 0; b < ctx.bands; ++b) {
        for (std::size_t k = 0; k < active.size(); ++k)
            change_sums[k] = sat_window_sum(active[k]->sat[b], ctx.width, x, y,
                                            config.weights.whole_window / 2, ctx.width, ctx.height);
        const std::vector<double> whole = whole_weights_from_sums(change_sums, config.weights.epsilon);

        for (std::size_t k = 0; k < active.size(); ++k) {
            const RasterGrid& coarse_k = active[k]->pair->coarse;
            individual[k].resize(members[k].members.size());
            for (std::size_t i = 0; i < members[k].members.size(); ++i) {
                const auto [mx, my] = members[k].members[i];
                individual[k][i] = individual_weight(mx, my, x, y, coarse_k, coarse_p, b,
                                                     config.weights, ctx.kernel);
            }
        }
        const PixelWeights weights = combine_and_normalize(individual, whole);
        stats.max_weight_sum_error =
            std::max(stats.max_weight_sum_error, std::fabs(weights.total() - 1.0));

        double value = 0.0;
        for (std::size_t k = 0; k < active.size(); ++k) {
            const RasterGrid& fine_k = active[k]->pair->fine;
            const RasterGrid& coarse_k = active[k]->pair->coarse;

            RegressionCoefficients coeffs;
            if (config.mode == FusionMode::starfm_special_case) {
                coeffs.a = 1.0;
                coeffs.b = static_cast<double>(coarse_p.at(x, y, b)) -
                           static_cast<double>(coarse_k.at(x, y, b));
                coeffs.n_used = 1;
                coeffs.degenerate = true;
            } else {
                const std::size_t n = members[k].members.size();
                c_k_buf.resize(n);
                c_p_buf.resize(n);
                for (std::size_t i = 0; i < n; ++i) {
                    const auto [mx, my] = members[k].members[i];
                    c_k_buf[i] = coarse_k.at(mx, my, b);
                    c_p_buf[i] = coarse_p.at(mx, my, b);
                }
                coeffs = coefficient_limits_check(fit_restricted(c_k_buf, c_p_buf, config.regression),
                                                  config.regression);
            }
            if (coeffs.degenerate)
                ++stats.degenerate_fits;
            else
                ++stats.full_fits;
            stats.max_abs_gain_deviation =
                std::max(stats.max_abs_gain_deviation, std::fabs(coeffs.a - 1.0));

            const std::vector<double>& w = weights.per_date[k];
            double date_sum = 0.0;
            for (std::size_t i = 0; i < members[k].members.size(); ++i) {
                const auto [mx, my] = members[k].members[i];
                date_sum += w[i] * (coeffs.a * static_cast<double>(fine_k.at(mx, my, b)) + coeffs.b);
            }
            value += date_sum;
        }
        values[b] = value;
    }
    return true;
}

} // namespace

double predict_pixel(int x, int y, int band, const FusionTask& task, const FusionConfig& config) {
    config.validate();
    task.validate();
    if (band < 0 || band >= task.coarse_target.band_count)
        throw config_error("predict_pixel: band out of range");
    if (x < 0 || x >= task.coarse_target.width || y < 0 || y >= task.coarse_target.height)
        throw geometry_error("predict_pixel: pixel out of bounds");

    EngineContext ctx(task, config);
    std::vector<double> values(ctx.bands, 0.0);
    PixelStats stats;
    if (!predict_pixel_values(ctx, x, y, values.data(), stats))
        throw geometry_error("predict_pixel: target pixel is invalid in the inputs");
    return values[band];
}

RasterGrid predict_image(const FusionTask& task, const FusionConfig& config, FusionStats* stats) {
    const auto t_start = std::chrono::steady_clock::now();
    config.validate();
    task.validate();
    if (task.references.size() == 1)
        std::cerr << "warning: predicting from a single reference pair; "
                     "two or more are recommended\n";

    EngineContext ctx(task, config);

    RasterGrid out;
    out.width = ctx.width;
    out.height = ctx.height;
    out.band_count = ctx.bands;
    out.pixel_size = task.references.front().fine.pixel_size;
    out.data.assign(out.value_count(), 0.0f);
    out.valid.assign(out.pixel_count(), 0);

    // tile decomposition; every tile writes a disjoint output region
    struct Tile {
        int x0, y0, x1, y1;
    };
    std::vector<Tile> tiles;
    for (int ty = 0; ty < ctx.height; ty += config.tile_size)
        for (int tx = 0; tx < ctx.width; tx += config.tile_size)
            tiles.push_back({tx, ty, std::min(tx + config.tile_size, ctx.width),
                             std::min(ty + config.tile_size, ctx.height)});

    unsigned n_threads = config.thread_hint > 0 ? static_cast<unsigned>(config.thread_hint)
                                                : std::thread::hardware_concurrency();
    if (n_threads == 0)
        n_threads = 1;
    n_threads = std::min<unsigned>(n_threads, static_cast<unsigned>(tiles.size()));

    std::atomic<std::size_t> next_tile{0};
    std::mutex stats_mutex;
    PixelStats total_stats;

    auto worker = [&]() {
        PixelStats local;
        std::vector<double> values(ctx.bands, 0.0);
        for (;;) {
            const std::size_t t = next_tile.fetch_add(1);
            if (t >= tiles.size())
                break;
            const Tile& tile = tiles[t];
            for (int y = tile.y0; y < tile.y1; ++y) {
                for (int x = tile.x0; x < tile.x1; ++x) {
                    if (predict_pixel_values(ctx, x, y, values.data(), local)) {
                        out.valid[out.pixel_index(x, y)] = 1;
                        for (int b = 0; b < ctx.bands; ++b)
                            out.at(x, y, b) = static_cast<float>(values[b]);
                        ++local.predicted_pixels;
                    } else {
                        ++local.nodata_pixels;
                    }
                }
            }
        }
        std::lock_guard<std::mutex> lock(stats_mutex);
        total_stats.merge(local);
    };

    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_threads);
        for (unsigned i = 0; i < n_threads; ++i)
            pool.emplace_back(worker);
        for (std::thread& th : pool)
            th.join();
    }

    if (stats) {
        stats->max_weight_sum_error = total_stats.max_weight_sum_error;
        stats->max_abs_gain_deviation = total_stats.max_abs_gain_deviation;
        stats->full_fits = total_stats.full_fits;
        stats->degenerate_fits = total_stats.degenerate_fits;
        stats->predicted_pixels = total_stats.predicted_pixels;
        stats->nodata_pixels = total_stats.nodata_pixels;
        stats->threads_used = static_cast<int>(n_threads);
        stats->wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    }
    return out;
}

SeriesResult predict_series(const std::vector<ReferencePair>& pairs,
                            const std::vector<DatedGrid>& coarse_series, SeriesProtocol protocol,
                            const FusionConfig& config) {
    const std::size_t n = pairs.size();
    std::vector<double> dates(n);
    for (std::size_t i = 0; i < n; ++i)
        dates[i] = date_ordinal(pairs[i].date_tag);
    for (std::size_t i = 1; i < n; ++i)
        if (dates[i] <= dates[i - 1])
            throw config_error("series dates must be strictly increasing");

    auto coarse_at = [&](const std::string& tag) -> const RasterGrid& {
        for (const DatedGrid& g : coarse_series)
            if (g.date_tag == tag)
                return g.grid;
        throw config_error("coarse series is missing date '" + tag + "'");
    };

    auto predict_one = [&](std::size_t lo, std::size_t mid, std::size_t hi) {
        FusionTask task;
        task.references = {pairs[lo], pairs[hi]};
        task.coarse_target = coarse_at(pairs[mid].date_tag);
        task.prediction_date_tag = pairs[mid].date_tag;
        SeriesPrediction p;
        p.date_tag = pairs[mid].date_tag;
        p.interval_days = (dates[hi] - dates[lo]) / 2.0;
        p.predicted = predict_image(task, config);
        p.eval = evaluate(p.predicted, pairs[mid].fine);
        return p;
    };

    SeriesResult result;
    if (protocol == SeriesProtocol::nearest_bracketing) {
        if (n < 3)
            throw config_error("nearest_bracketing needs at least 3 dated pairs");
        for (std::size_t i = 1; i + 1 < n; ++i)
            result.predictions.push_back(predict_one(i - 1, i, i + 1));
    } else {
        if (n < 3 || n % 2 == 0)
            throw config_error("symmetric_sweep needs an odd number (>= 3) of dated pairs");
        const std::size_t mid = n / 2;
        for (std::size_t j = 1; j <= mid; ++j)
            result.predictions.push_back(predict_one(mid - j, mid, mid + j));
    }
    return result;
}

} // namespace stnlffm
