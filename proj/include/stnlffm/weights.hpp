#pragma once

#include <vector>

#include "stnlffm/raster.hpp"

namespace stnlffm {

struct WeightParams {
    double h = 0.15;          // filtering parameter, reflectance units
    double kernel_sigma = 1.5; // std of the Gaussian patch kernel
    int patch_size = 5;        // odd
    int whole_window = 31;     // odd, window of the per-date weight
    double epsilon = 1e-6;     // guard for zero change sums
    bool squared_patch_distance = false; // |diff| by default, diff^2 when set

    void validate() const;
};

/// Gaussian patch kernel normalized to sum 1 over the full patch. When a
/// patch is clipped at the image border the caller renormalizes over the
/// remaining taps.
class PatchKernel {
public:
    PatchKernel(int patch_size, double sigma);
    int radius() const { return radius_; }
    double at(int dx, int dy) const {
        return weights_[static_cast<std::size_t>(dy + radius_) * size_ + (dx + radius_)];
    }

private:
    int size_;
    int radius_;
    std::vector<double> weights_;
};

/// Non-local individual weight of one similar pixel: the coarse patch around
/// the member at the reference date is compared against the coarse patch
/// around the target at the prediction date, aggregated with the Gaussian
/// kernel, and mapped through exp(-dist / h^2). Result in (0, 1].
double individual_weight(int member_x, int member_y, int target_x, int target_y,
                         const RasterGrid& coarse_k, const RasterGrid& coarse_p, int band,
                         const WeightParams& params, const PatchKernel& kernel);

double individual_weight(int member_x, int member_y, int target_x, int target_y,
                         const RasterGrid& coarse_k, const RasterGrid& coarse_p, int band,
                         const WeightParams& params);

/// Normalized inverse-change weights across reference dates from the window
/// sums S_k of |C_k - C_p|: w_k = (1/(S_k+eps)) / sum_k' (1/(S_k'+eps)).
std::vector<double> whole_weights_from_sums(const std::vector<double>& change_sums, double epsilon);

/// Window change sum for one date and band: sum of |C_k - C_p| over the
/// whole_window centered at the target, jointly valid pixels only.
double window_change_sum(const RasterGrid& coarse_k, const RasterGrid& coarse_p, int target_x,
                         int target_y, int band, int whole_window);

/// Per-date weights for one target pixel and band, over all reference dates.
std::vector<double> whole_weights(const std::vector<const RasterGrid*>& coarse_k_list,
                                  const RasterGrid& coarse_p, int target_x, int target_y, int band,
                                  const WeightParams& params);

/// Final per-member weights for one predicted pixel and band: individual
/// weights normalized to sum 1 within each date, multiplied by that date's
/// whole weight. The grand total over dates and members is 1.
struct PixelWeights {
    std::vector<std::vector<double>> per_date; // [date][member]
    double total() const;
};

PixelWeights combine_and_normalize(const std::vector<std::vector<double>>& individual,
                                   const std::vector<double>& whole);

} // namespace stnlffm
