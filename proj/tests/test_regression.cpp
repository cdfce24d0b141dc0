#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "stnlffm/regression.hpp"

using namespace stnlffm;

namespace {

double objective(const std::vector<double>& ck, const std::vector<double>& cp, double a, double b,
                 double gamma) {
    double r = 0.0;
    for (std::size_t i = 0; i < ck.size(); ++i) {
        const double e = cp[i] - (a * ck[i] + b);
        r += e * e;
    }
    return 0.5 * r + 0.5 * gamma * (a - 1.0) * (a - 1.0);
}

// closed-form ordinary least squares, independent route
std::pair<double, double> ols(const std::vector<double>& ck, const std::vector<double>& cp) {
    const double n = static_cast<double>(ck.size());
    double sk = 0, sp = 0, skk = 0, skp = 0;
    for (std::size_t i = 0; i < ck.size(); ++i) {
        sk += ck[i];
        sp += cp[i];
        skk += ck[i] * ck[i];
        skp += ck[i] * cp[i];
    }
    const double slope = (n * skp - sk * sp) / (n * skk - sk * sk);
    const double intercept = (sp - slope * sk) / n;
    return {slope, intercept};
}

std::vector<double> random_vector(std::mt19937_64& gen, std::size_t n, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(n);
    for (double& x : v)
        x = dist(gen);
    return v;
}

} // namespace

TEST_CASE("exact fit: c_p equals c_k gives a=1, b=0") {
    RegressionParams p;
    std::vector<double> ck = {0.1, 0.3, 0.5, 0.7, 0.9};
    RegressionCoefficients c = fit_restricted(ck, ck, p);
    CHECK(!c.degenerate);
    CHECK(c.a == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(c.b == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("uniform shift: c_p = c_k + 0.05 gives a=1, b=0.05") {
    RegressionParams p;
    std::vector<double> ck = {0.1, 0.3, 0.5, 0.7, 0.9};
    std::vector<double> cp = ck;
    for (double& v : cp)
        v += 0.05;
    RegressionCoefficients c = fit_restricted(ck, cp, p);
    CHECK(c.a == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(c.b == doctest::Approx(0.05).epsilon(1e-10));
}

TEST_CASE("random instance matches grid search and the analytic normal equations") {
    std::mt19937_64 gen(2024);
    RegressionParams p;
    p.gamma = 0.01;
    p.min_points = 2;
    const std::vector<double> ck = random_vector(gen, 20, 0.1, 0.9);
    std::vector<double> cp(20);
    for (std::size_t i = 0; i < 20; ++i)
        cp[i] = 1.2 * ck[i] - 0.05 + 0.02 * std::sin(static_cast<double>(i));
    const RegressionCoefficients c = fit_restricted(ck, cp, p);

    // analytic route: uncentered normal equations via Cramer
    double sk = 0, sp = 0, skk = 0, skp = 0;
    const double n = 20.0;
    for (std::size_t i = 0; i < 20; ++i) {
        sk += ck[i];
        sp += cp[i];
        skk += ck[i] * ck[i];
        skp += ck[i] * cp[i];
    }
    const double det = (skk + p.gamma) * n - sk * sk;
    const double a_ref = ((skp + p.gamma) * n - sk * sp) / det;
    const double b_ref = ((skk + p.gamma) * sp - sk * (skp + p.gamma)) / det;
    CHECK(c.a == doctest::Approx(a_ref).epsilon(1e-8));
    CHECK(c.b == doctest::Approx(b_ref).epsilon(1e-8));

    // brute-force grid search over (a, b)
    double best_a = 0, best_b = 0, best = 1e300;
    for (int ia = 0; ia <= 400; ++ia) {
        const double a = 0.0 + 2.0 * ia / 400.0;
        for (int ib = 0; ib <= 400; ++ib) {
            const double b = -0.5 + 1.0 * ib / 400.0;
            const double f = objective(ck, cp, a, b, p.gamma);
            if (f < best) {
                best = f;
                best_a = a;
                best_b = b;
            }
        }
    }
    CHECK(std::fabs(c.a - best_a) <= 2.0 / 400.0);
    CHECK(std::fabs(c.b - best_b) <= 1.0 / 400.0);
    CHECK(objective(ck, cp, c.a, c.b, p.gamma) <= best + 1e-12);
}

TEST_CASE("gamma -> infinity drives a to 1 monotonically") {
    std::mt19937_64 gen(7);
    RegressionParams p;
    p.min_points = 2;
    const std::vector<double> ck = random_vector(gen, 15, 0.1, 0.9);
    std::vector<double> cp(15);
    for (std::size_t i = 0; i < 15; ++i)
        cp[i] = 1.6 * ck[i] + 0.1;
    double previous = std::fabs(fit_restricted(ck, cp, p).a - 1.0);
    for (double gamma : {0.1, 1.0, 10.0, 1e3, 1e6, 1e9}) {
        p.gamma = gamma;
        const RegressionCoefficients c = fit_restricted(ck, cp, p);
        const double dev = std::fabs(c.a - 1.0);
        CHECK(dev <= previous + 1e-15);
        previous = dev;
        if (gamma >= 1e6) {
            CHECK(dev < 1e-4);
            // b approaches the mean difference
            double mean_diff = 0.0;
            for (std::size_t i = 0; i < 15; ++i)
                mean_diff += (cp[i] - ck[i]) / 15.0;
            CHECK(c.b == doctest::Approx(mean_diff).epsilon(1e-3));
        }
    }
}

TEST_CASE("gamma = 0 equals closed-form OLS") {
    std::mt19937_64 gen(99);
    RegressionParams p;
    p.gamma = 0.0;
    p.min_points = 2;
    for (int trial = 0; trial < 100; ++trial) {
        const std::vector<double> ck = random_vector(gen, 12, 0.0, 1.0);
        std::vector<double> cp = random_vector(gen, 12, 0.0, 1.0);
        const RegressionCoefficients c = fit_restricted(ck, cp, p);
        if (c.degenerate)
            continue; // variance floor tripped; OLS comparison not applicable
        const auto [slope, intercept] = ols(ck, cp);
        CHECK(std::fabs(c.a - slope) <= 1e-10);
        CHECK(std::fabs(c.b - intercept) <= 1e-10);
    }
}

TEST_CASE("returned objective never exceeds the degenerate path's objective") {
    std::mt19937_64 gen(123);
    RegressionParams p;
    p.min_points = 2;
    for (int trial = 0; trial < 50; ++trial) {
        const std::vector<double> ck = random_vector(gen, 10, 0.0, 1.0);
        const std::vector<double> cp = random_vector(gen, 10, 0.0, 1.0);
        const RegressionCoefficients c = fit_restricted(ck, cp, p);
        if (c.degenerate)
            continue;
        CHECK(objective(ck, cp, c.a, c.b, p.gamma) <=
              objective(ck, cp, 1.0, c.fallback_b, p.gamma) + 1e-12);
    }
}

TEST_CASE("fit is shift-equivariant") {
    std::mt19937_64 gen(55);
    RegressionParams p;
    p.min_points = 2;
    const std::vector<double> ck = random_vector(gen, 18, 0.1, 0.9);
    std::vector<double> cp(18);
    for (std::size_t i = 0; i < 18; ++i)
        cp[i] = 0.9 * ck[i] + 0.07 + 0.01 * std::cos(static_cast<double>(i));
    const RegressionCoefficients base = fit_restricted(ck, cp, p);

    const double delta = 0.13;
    std::vector<double> ck_s = ck, cp_s = cp;
    for (double& v : ck_s)
        v += delta;
    for (double& v : cp_s)
        v += delta;
    const RegressionCoefficients both = fit_restricted(ck_s, cp_s, p);
    CHECK(both.a == doctest::Approx(base.a).epsilon(1e-9));
    CHECK(both.b == doctest::Approx(base.b + delta * (1.0 - base.a)).epsilon(1e-7));

    std::vector<double> cp_only = cp;
    for (double& v : cp_only)
        v += delta;
    const RegressionCoefficients shifted = fit_restricted(ck, cp_only, p);
    CHECK(shifted.a == doctest::Approx(base.a).epsilon(1e-9));
    CHECK(shifted.b == doctest::Approx(base.b + delta).epsilon(1e-9));
}

TEST_CASE("degenerate paths: few points or no variance") {
    RegressionParams p; // min_points = 5
    std::vector<double> ck = {0.2, 0.4};
    std::vector<double> cp = {0.3, 0.5};
    RegressionCoefficients c = fit_restricted(ck, cp, p);
    CHECK(c.degenerate);
    CHECK(c.a == 1.0);
    CHECK(c.b == doctest::Approx(0.1).epsilon(1e-12));

    std::vector<double> flat = {0.5, 0.5, 0.5, 0.5, 0.5, 0.5};
    std::vector<double> other = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
    c = fit_restricted(flat, other, p);
    CHECK(c.degenerate);
    CHECK(c.a == 1.0);
    CHECK(c.b == doctest::Approx(0.35 - 0.5).epsilon(1e-12));
}

TEST_CASE("errors: empty or non-finite inputs") {
    RegressionParams p;
    CHECK_THROWS_AS(fit_restricted({}, {}, p), config_error);
    std::vector<double> a = {0.1, 0.2};
    std::vector<double> bad = {0.1, std::nan("")};
    CHECK_THROWS_AS(fit_restricted(a, bad, p), numeric_error);
}

TEST_CASE("coefficient limits check") {
    RegressionParams p; // bounds [0, 3]
    RegressionCoefficients in;
    in.a = 1.02;
    in.b = 0.01;
    in.fallback_b = 0.05;
    RegressionCoefficients out = coefficient_limits_check(in, p);
    CHECK(out.a == 1.02);
    CHECK(out.b == 0.01);
    CHECK(!out.degenerate);

    in.a = -4.0;
    out = coefficient_limits_check(in, p);
    CHECK(out.degenerate);
    CHECK(out.a == 1.0);
    CHECK(out.b == doctest::Approx(0.05));

    in.a = 3.0; // bounds are inclusive
    out = coefficient_limits_check(in, p);
    CHECK(out.a == 3.0);
    CHECK(!out.degenerate);
}

TEST_CASE("shift equivariance holds for a only under joint shifts") {
    // documented contract: shifting both inputs leaves a unchanged
    std::mt19937_64 gen(10);
    RegressionParams p;
    p.min_points = 2;
    p.gamma = 0.0; // pure OLS is exactly equivariant in b as well
    const std::vector<double> ck = random_vector(gen, 25, 0.2, 0.8);
    std::vector<double> cp = random_vector(gen, 25, 0.2, 0.8);
    const RegressionCoefficients base = fit_restricted(ck, cp, p);
    std::vector<double> ck_s = ck, cp_s = cp;
    for (double& v : ck_s)
        v += 0.31;
    for (double& v : cp_s)
        v += 0.31;
    const RegressionCoefficients joint = fit_restricted(ck_s, cp_s, p);
    CHECK(joint.a == doctest::Approx(base.a).epsilon(1e-9));
}
