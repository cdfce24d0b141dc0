#pragma once

#include <utility>
#include <vector>

#include "stnlffm/raster.hpp"

namespace stnlffm {

struct SimilarityParams {
    int search_window = 31; // odd, fine pixels
    double d = 1.0;         // spectral threshold free parameter
    int class_count = 4;    // m in the threshold tau(B) = d * sigma_B * 2/m
    double sigma_cc = 0.02; // change-consistency tolerance, reflectance units
    int cap = 40;           // max similar pixels per target per reference date

    void validate() const;
};

/// Same-class pixel locations for one target pixel and one reference date.
/// Members are kept in row-major scan order and always include the target.
struct SimilarPixelSet {
    int target_x = 0;
    int target_y = 0;
    int reference_date_index = 0;
    std::vector<std::pair<int, int>> members;
};

/// Per-band spectral thresholds tau(B) = d * sigma_B * 2 / class_count, where
/// sigma_B is the standard deviation of band B over valid pixels of the fine
/// reference image.
std::vector<double> spectral_thresholds(const RasterGrid& fine_k, const SimilarityParams& params);

/// Selects the in-window pixels that are spectrally consistent with the
/// target in the fine reference image and whose coarse temporal change
/// magnitude matches the target's, across all bands. If more than `cap`
/// pixels qualify, the target plus the cap-1 candidates with the smallest
/// spectral distance are kept (ties broken by scan order).
///
/// A candidate counts as valid only if it is valid in fine_k, coarse_k and
/// coarse_p. The same must hold for the target.
SimilarPixelSet select_similar(int target_x, int target_y, const RasterGrid& fine_k,
                               const RasterGrid& coarse_k, const RasterGrid& coarse_p,
                               const SimilarityParams& params,
                               const std::vector<double>& thresholds, int date_index = 0);

/// Convenience overload computing the thresholds from fine_k on the fly.
SimilarPixelSet select_similar(int target_x, int target_y, const RasterGrid& fine_k,
                               const RasterGrid& coarse_k, const RasterGrid& coarse_p,
                               const SimilarityParams& params, int date_index = 0);

} // namespace stnlffm
