#include "stnlffm/regression.hpp"

#include <cmath>

namespace stnlffm {

void RegressionParams::validate() const {
    if (gamma < 0.0)
        throw config_error("gamma must be >= 0");
    if (min_points < 2)
        throw config_error("min_points must be >= 2");
    if (variance_floor <= 0.0)
        throw config_error("variance_floor must be > 0");
    if (a_min > a_max)
        throw config_error("a_min must not exceed a_max");
}

RegressionCoefficients fit_restricted(std::span<const double> c_k, std::span<const double> c_p,
                                      const RegressionParams& params) {
    params.validate();
    const std::size_t n = c_k.size();
    if (n == 0 || c_p.size() != n)
        throw config_error("fit_restricted: inputs must be equal-length and non-empty");
    for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(c_k[i]) || !std::isfinite(c_p[i]))
            throw numeric_error("fit_restricted: non-finite input");

    double mean_k = 0.0, mean_p = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mean_k += c_k[i];
        mean_p += c_p[i];
    }
    mean_k /= static_cast<double>(n);
    mean_p /= static_cast<double>(n);

    RegressionCoefficients out;
    out.n_used = static_cast<int>(n);
    out.fallback_b = mean_p - mean_k;

    double skk = 0.0, skp = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dk = c_k[i] - mean_k;
        skk += dk * dk;
        skp += dk * (c_p[i] - mean_p);
    }
    const double variance = skk / static_cast<double>(n);

    if (static_cast<int>(n) < params.min_points || variance < params.variance_floor) {
        out.a = 1.0;
        out.b = out.fallback_b;
        out.degenerate = true;
        return out;
    }

    out.a = (skp + params.gamma) / (skk + params.gamma);
    out.b = mean_p - out.a * mean_k;
    return out;
}

RegressionCoefficients coefficient_limits_check(RegressionCoefficients coeffs,
                                                const RegressionParams& params) {
    if (coeffs.a < params.a_min || coeffs.a > params.a_max) {
        coeffs.a = 1.0;
        coeffs.b = coeffs.fallback_b;
        coeffs.degenerate = true;
    }
    return coeffs;
}

} // namespace stnlffm
