#include "stnlffm/similarity.hpp"

#include <algorithm>
#include <cmath>

namespace stnlffm {

void SimilarityParams::validate() const {
    if (search_window < 3 || search_window % 2 == 0)
        throw config_error("search_window must be odd and >= 3");
    if (d <= 0.0)
        throw config_error("d must be > 0");
    if (class_count < 1)
        throw config_error("class_count must be >= 1");
    if (sigma_cc < 0.0)
        throw config_error("sigma_cc must be >= 0");
    if (cap < 1)
        throw config_error("cap must be >= 1");
}

std::vector<double> spectral_thresholds(const RasterGrid& fine_k, const SimilarityParams& params) {
    params.validate();
    std::vector<double> tau(fine_k.band_count, 0.0);
    const std::size_t n_pixels = fine_k.pixel_count();
    for (int b = 0; b < fine_k.band_count; ++b) {
        const float* plane = fine_k.data.data() + static_cast<std::size_t>(b) * n_pixels;
        double sum = 0.0;
        long long count = 0;
        for (std::size_t i = 0; i < n_pixels; ++i) {
            if (fine_k.valid[i]) {
                sum += plane[i];
                ++count;
            }
        }
        if (count == 0) {
            tau[b] = 0.0;
            continue;
        }
        const double mean = sum / count;
        double ss = 0.0;
        for (std::size_t i = 0; i < n_pixels; ++i) {
            if (fine_k.valid[i]) {
                const double dvi = plane[i] - mean;
                ss += dvi * dvi;
            }
        }
        const double sigma = std::sqrt(ss / count);
        tau[b] = params.d * sigma * 2.0 / params.class_count;
    }
    return tau;
}

SimilarPixelSet select_similar(int target_x, int target_y, const RasterGrid& fine_k,
                               const RasterGrid& coarse_k, const RasterGrid& coarse_p,
                               const SimilarityParams& params,
                               const std::vector<double>& thresholds, int date_index) {
    params.validate();
    if (!same_geometry(fine_k, coarse_k) || !same_geometry(fine_k, coarse_p))
        throw geometry_error("select_similar: grids do not share geometry");
    if (static_cast<int>(thresholds.size()) != fine_k.band_count)
        throw config_error("select_similar: one threshold per band required");

    auto valid3 = [&](int x, int y) {
        return fine_k.valid_at(x, y) && coarse_k.valid_at(x, y) && coarse_p.valid_at(x, y);
    };
    if (target_x < 0 || target_x >= fine_k.width || target_y < 0 || target_y >= fine_k.height ||
        !valid3(target_x, target_y))
        throw geometry_error("select_similar: target pixel is out of bounds or invalid");

    const int bands = fine_k.band_count;
    const int r = params.search_window / 2;
    const int x0 = std::max(0, target_x - r);
    const int x1 = std::min(fine_k.width - 1, target_x + r);
    const int y0 = std::max(0, target_y - r);
    const int y1 = std::min(fine_k.height - 1, target_y + r);

    // target's per-band coarse temporal change magnitude
    std::vector<double> target_change(bands);
    for (int b = 0; b < bands; ++b)
        target_change[b] =
            std::fabs(coarse_k.at(target_x, target_y, b) - coarse_p.at(target_x, target_y, b));

    struct Candidate {
        int x, y;
        long scan;
        double spectral_dist; // L1 across bands in the fine reference image
    };
    std::vector<Candidate> candidates;
    candidates.reserve(static_cast<std::size_t>(x1 - x0 + 1) * (y1 - y0 + 1));

    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            if (x == target_x && y == target_y)
                continue; // target is force-retained below
            if (!valid3(x, y))
                continue;
            bool ok = true;
            double dist = 0.0;
            for (int b = 0; b < bands; ++b) {
                const double df = std::fabs(fine_k.at(x, y, b) - fine_k.at(target_x, target_y, b));
                if (df > thresholds[b]) {
                    ok = false;
                    break;
                }
                dist += df;
            }
            if (!ok)
                continue;
            for (int b = 0; b < bands; ++b) {
                const double change = std::fabs(coarse_k.at(x, y, b) - coarse_p.at(x, y, b));
                if (std::fabs(change - target_change[b]) >= params.sigma_cc) {
                    ok = false;
                    break;
                }
            }
            if (!ok)
                continue;
            candidates.push_back({x, y, static_cast<long>(y) * fine_k.width + x, dist});
        }
    }

    if (static_cast<int>(candidates.size()) > params.cap - 1) {
        std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
            if (a.spectral_dist != b.spectral_dist)
                return a.spectral_dist < b.spectral_dist;
            return a.scan < b.scan;
        });
        candidates.resize(params.cap - 1);
    }

    SimilarPixelSet set;
    set.target_x = target_x;
    set.target_y = target_y;
    set.reference_date_index = date_index;
    set.members.reserve(candidates.size() + 1);
    candidates.push_back({target_x, target_y,
                          static_cast<long>(target_y) * fine_k.width + target_x, 0.0});
    std::sort(candidates.begin(), candidates.end(),
              [](const Candidate& a, const Candidate& b) { return a.scan < b.scan; });
    for (const Candidate& c : candidates)
        set.members.emplace_back(c.x, c.y);
    return set;
}

SimilarPixelSet select_similar(int target_x, int target_y, const RasterGrid& fine_k,
                               const RasterGrid& coarse_k, const RasterGrid& coarse_p,
                               const SimilarityParams& params, int date_index) {
    return select_similar(target_x, target_y, fine_k, coarse_k, coarse_p, params,
                          spectral_thresholds(fine_k, params), date_index);
}

} // namespace stnlffm
