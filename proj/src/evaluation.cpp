#include "stnlffm/evaluation.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace stnlffm {

double rmse(std::span<const double> predicted, std::span<const double> observed) {
    const std::size_t n = predicted.size();
    if (n == 0 || observed.size() != n)
        throw config_error("rmse: inputs must be equal-length and non-empty");
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = predicted[i] - observed[i];
        ss += d * d;
    }
    return std::sqrt(ss / static_cast<double>(n));
}

double r_squared(std::span<const double> predicted, std::span<const double> observed) {
    const std::size_t n = predicted.size();
    if (n < 2 || observed.size() != n)
        throw config_error("r_squared: inputs must be equal-length with at least 2 samples");
    double mean_p = 0.0, mean_o = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mean_p += predicted[i];
        mean_o += observed[i];
    }
    mean_p /= static_cast<double>(n);
    mean_o /= static_cast<double>(n);
    double spo = 0.0, spp = 0.0, soo = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dp = predicted[i] - mean_p;
        const double dob = observed[i] - mean_o;
        spo += dp * dob;
        spp += dp * dp;
        soo += dob * dob;
    }
    if (spp == 0.0 || soo == 0.0)
        return std::numeric_limits<double>::quiet_NaN(); // constant array: undefined, not 0
    const double r = spo / (std::sqrt(spp) * std::sqrt(soo));
    return r * r;
}

EvalReport evaluate(const RasterGrid& predicted, const RasterGrid& observed) {
    if (!same_geometry(predicted, observed))
        throw geometry_error("evaluate: rasters do not share geometry");

    const std::size_t n_pixels = predicted.pixel_count();
    std::vector<std::size_t> joint;
    joint.reserve(n_pixels);
    for (std::size_t i = 0; i < n_pixels; ++i)
        if (predicted.valid[i] && observed.valid[i])
            joint.push_back(i);
    if (joint.empty())
        throw geometry_error("evaluate: no jointly valid pixels");

    EvalReport report;
    report.n_pixels = static_cast<long long>(joint.size());
    report.band_rmse.resize(predicted.band_count);
    report.band_r2.resize(predicted.band_count);
    report.r2_defined.resize(predicted.band_count);

    std::vector<double> p(joint.size()), o(joint.size());
    double rmse_sum = 0.0, r2_sum = 0.0;
    int r2_count = 0;
    for (int b = 0; b < predicted.band_count; ++b) {
        const float* pp = predicted.data.data() + static_cast<std::size_t>(b) * n_pixels;
        const float* op = observed.data.data() + static_cast<std::size_t>(b) * n_pixels;
        for (std::size_t i = 0; i < joint.size(); ++i) {
            p[i] = pp[joint[i]];
            o[i] = op[joint[i]];
        }
        report.band_rmse[b] = rmse(p, o);
        rmse_sum += report.band_rmse[b];
        const double r2 = joint.size() >= 2 ? r_squared(p, o) : std::numeric_limits<double>::quiet_NaN();
        report.band_r2[b] = r2;
        report.r2_defined[b] = std::isfinite(r2) ? 1 : 0;
        if (report.r2_defined[b]) {
            r2_sum += r2;
            ++r2_count;
        } else {
            report.r2_all_defined = false;
        }
    }
    report.mean_rmse = rmse_sum / predicted.band_count;
    report.mean_r2 = r2_count > 0 ? r2_sum / r2_count : std::numeric_limits<double>::quiet_NaN();
    return report;
}

std::string EvalReport::to_csv() const {
    std::ostringstream out;
    out.precision(10);
    out << "band,rmse,r2,n_pixels\n";
    for (std::size_t b = 0; b < band_rmse.size(); ++b) {
        out << (b + 1) << "," << band_rmse[b] << ",";
        if (r2_defined[b])
            out << band_r2[b];
        out << "," << n_pixels << "\n";
    }
    out << "mean," << mean_rmse << ",";
    if (std::isfinite(mean_r2))
        out << mean_r2;
    out << "," << n_pixels << "\n";
    return out.str();
}

std::string EvalReport::to_json() const {
    nlohmann::json bands = nlohmann::json::array();
    for (std::size_t b = 0; b < band_rmse.size(); ++b) {
        nlohmann::json row = {{"band", b + 1}, {"rmse", band_rmse[b]}};
        if (r2_defined[b])
            row["r2"] = band_r2[b];
        else
            row["r2"] = nullptr;
        bands.push_back(row);
    }
    nlohmann::json j = {
        {"bands", bands},
        {"mean_rmse", mean_rmse},
        {"n_pixels", n_pixels},
        {"r2_all_defined", r2_all_defined},
    };
    if (std::isfinite(mean_r2))
        j["mean_r2"] = mean_r2;
    else
        j["mean_r2"] = nullptr;
    return j.dump(2);
}

} // namespace stnlffm
