#include "stnlffm/weights.hpp"

#include <algorithm>
#include <cmath>

namespace stnlffm {

void WeightParams::validate() const {
    if (h <= 0.0)
        throw config_error("h must be > 0");
    if (kernel_sigma <= 0.0)
        throw config_error("kernel_sigma must be > 0");
    if (patch_size < 1 || patch_size % 2 == 0)
        throw config_error("patch_size must be odd and >= 1");
    if (whole_window < 1 || whole_window % 2 == 0)
        throw config_error("whole_window must be odd and >= 1");
    if (epsilon <= 0.0)
        throw config_error("epsilon must be > 0");
}

PatchKernel::PatchKernel(int patch_size, double sigma)
    : size_(patch_size), radius_(patch_size / 2), weights_(static_cast<std::size_t>(patch_size) * patch_size) {
    double sum = 0.0;
    for (int dy = -radius_; dy <= radius_; ++dy) {
        for (int dx = -radius_; dx <= radius_; ++dx) {
            const double w = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            weights_[static_cast<std::size_t>(dy + radius_) * size_ + (dx + radius_)] = w;
            sum += w;
        }
    }
    for (double& w : weights_)
        w /= sum;
}

double individual_weight(int member_x, int member_y, int target_x, int target_y,
                         const RasterGrid& coarse_k, const RasterGrid& coarse_p, int band,
                         const WeightParams& params, const PatchKernel& kernel) {
    const int r = kernel.radius();
    double num = 0.0;
    double den = 0.0;
    for (int dy = -r; dy <= r; ++dy) {
        const int my = member_y + dy;
        const int ty = target_y + dy;
        if (my < 0 || my >= coarse_k.height || ty < 0 || ty >= coarse_p.height)
            continue;
        for (int dx = -r; dx <= r; ++dx) {
            const int mx = member_x + dx;
            const int tx = target_x + dx;
            if (mx < 0 || mx >= coarse_k.width || tx < 0 || tx >= coarse_p.width)
                continue;
            if (!coarse_k.valid_at(mx, my) || !coarse_p.valid_at(tx, ty))
                continue;
            const double g = kernel.at(dx, dy);
            double diff = std::fabs(static_cast<double>(coarse_k.at(mx, my, band)) -
                                    static_cast<double>(coarse_p.at(tx, ty, band)));
            if (params.squared_patch_distance)
                diff *= diff;
            num += g * diff;
            den += g;
        }
    }
    // the (0,0) offset always survives clipping and both pixels are valid for
    // any selected member, so den > 0 here
    const double dist = den > 0.0 ? num / den : 0.0;
    return std::exp(-dist / (params.h * params.h));
}

double individual_weight(int member_x, int member_y, int target_x, int target_y,
                         const RasterGrid& coarse_k, const RasterGrid& coarse_p, int band,
                         const WeightParams& params) {
    params.validate();
    PatchKernel kernel(params.patch_size, params.kernel_sigma);
    return individual_weight(member_x, member_y, target_x, target_y, coarse_k, coarse_p, band,
                             params, kernel);
}

std::vector<double> whole_weights_from_sums(const std::vector<double>& change_sums, double epsilon) {
    std::vector<double> weights(change_sums.size());
    double total = 0.0;
    for (std::size_t k = 0; k < change_sums.size(); ++k) {
        weights[k] = 1.0 / (change_sums[k] + epsilon);
        total += weights[k];
    }
    for (double& w : weights)
        w /= total;
    return weights;
}

double window_change_sum(const RasterGrid& coarse_k, const RasterGrid& coarse_p, int target_x,
                         int target_y, int band, int whole_window) {
    const int r = whole_window / 2;
    const int x0 = std::max(0, target_x - r);
    const int x1 = std::min(coarse_k.width - 1, target_x + r);
    const int y0 = std::max(0, target_y - r);
    const int y1 = std::min(coarse_k.height - 1, target_y + r);
    double sum = 0.0;
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x)
            if (coarse_k.valid_at(x, y) && coarse_p.valid_at(x, y))
                sum += std::fabs(static_cast<double>(coarse_k.at(x, y, band)) -
                                 static_cast<double>(coarse_p.at(x, y, band)));
    return sum;
}

std::vector<double> whole_weights(const std::vector<const RasterGrid*>& coarse_k_list,
                                  const RasterGrid& coarse_p, int target_x, int target_y, int band,
                                  const WeightParams& params) {
    params.validate();
    std::vector<double> sums(coarse_k_list.size());
    for (std::size_t k = 0; k < coarse_k_list.size(); ++k)
        sums[k] = window_change_sum(*coarse_k_list[k], coarse_p, target_x, target_y, band,
                                    params.whole_window);
    return whole_weights_from_sums(sums, params.epsilon);
}

double PixelWeights::total() const {
    double t = 0.0;
    for (const auto& date : per_date)
        for (double w : date)
            t += w;
    return t;
}

PixelWeights combine_and_normalize(const std::vector<std::vector<double>>& individual,
                                   const std::vector<double>& whole) {
    if (individual.size() != whole.size())
        throw config_error("combine_and_normalize: one whole weight per date required");
    PixelWeights out;
    out.per_date.resize(individual.size());
    for (std::size_t k = 0; k < individual.size(); ++k) {
        const auto& ind = individual[k];
        if (ind.empty())
            throw config_error("combine_and_normalize: every date needs at least one member");
        double sum = 0.0;
        for (double w : ind)
            sum += w;
        out.per_date[k].resize(ind.size());
        if (sum <= 0.0) {
            // exp(.) > 0 makes this unreachable in normal operation; guard anyway
            const double uniform = whole[k] / static_cast<double>(ind.size());
            std::fill(out.per_date[k].begin(), out.per_date[k].end(), uniform);
        } else {
            for (std::size_t i = 0; i < ind.size(); ++i)
                out.per_date[k][i] = ind[i] / sum * whole[k];
        }
    }
    return out;
}

} // namespace stnlffm
