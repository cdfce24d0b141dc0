#pragma once

#include <span>

#include "stnlffm/errors.hpp"

namespace stnlffm {

struct RegressionParams {
    double gamma = 0.05;         // penalty strength on (a - 1)^2
    int min_points = 5;          // below this, take the degenerate path
    double variance_floor = 1e-8; // minimum var(c_k) for a full fit
    double a_min = 0.0;          // gain bounds, inclusive
    double a_max = 3.0;

    void validate() const;
};

/// Per-target, per-date, per-band gain/offset describing the reflectance
/// change between a reference date and the prediction date.
struct RegressionCoefficients {
    double a = 1.0;
    double b = 0.0;
    int n_used = 0;
    bool degenerate = false;
    double fallback_b = 0.0; // mean(c_p - c_k), the offset of the degenerate path
};

/// Minimizes 1/2 ||c_p - (a*c_k + b)||^2 + 1/2 gamma (a-1)^2 in closed form:
///   a = (sum (c_k - mk)(c_p - mp) + gamma) / (sum (c_k - mk)^2 + gamma)
///   b = mp - a * mk
/// Falls back to a = 1, b = mean(c_p - c_k) when there are fewer than
/// min_points samples or var(c_k) is below the variance floor.
RegressionCoefficients fit_restricted(std::span<const double> c_k, std::span<const double> c_p,
                                      const RegressionParams& params);

/// Replaces a fit whose gain left [a_min, a_max] with the degenerate path
/// result (bounds inclusive).
RegressionCoefficients coefficient_limits_check(RegressionCoefficients coeffs,
                                                const RegressionParams& params);

} // namespace stnlffm
