#pragma once

#include <span>
#include <string>
#include <vector>

#include "stnlffm/raster.hpp"

namespace stnlffm {

/// Root-mean-square error between two equal-length value arrays.
double rmse(std::span<const double> predicted, std::span<const double> observed);

/// Squared Pearson correlation in [0, 1]. Returns quiet NaN when either
/// array is constant (the correlation is undefined, not zero).
double r_squared(std::span<const double> predicted, std::span<const double> observed);

/// Per-band comparison of a predicted raster against an observed one, over
/// jointly valid pixels, with means across bands. Accumulation is in double.
struct EvalReport {
    std::vector<double> band_rmse;
    std::vector<double> band_r2;        // NaN where undefined
    std::vector<std::uint8_t> r2_defined;
    double mean_rmse = 0.0;
    double mean_r2 = 0.0;               // over defined bands only
    bool r2_all_defined = true;
    long long n_pixels = 0;             // jointly valid pixels per band

    std::string to_csv() const;
    std::string to_json() const;
};

EvalReport evaluate(const RasterGrid& predicted, const RasterGrid& observed);

} // namespace stnlffm
