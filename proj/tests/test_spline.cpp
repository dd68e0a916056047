#include "doctest.h"

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <sstream>

#include "mpru/errors.hpp"
#include "mpru/spline.hpp"

using namespace mpru;

namespace {
Eigen::VectorXd linspace(double lo, double hi, int n) {
    Eigen::VectorXd v(n);
    v.setLinSpaced(n, lo, hi);
    return v;
}

std::mt19937_64 g_rng(13);
double unif(double lo, double hi) {
    return lo + (hi - lo) * static_cast<double>(g_rng() >> 11) * 0x1.0p-53;
}
}  // namespace

TEST_CASE("constant function reproduced everywhere") {
    const auto ax = linspace(0.0, 1.0, 6);
    Eigen::VectorXd vals = Eigen::VectorXd::Constant(6, 3.0);
    const auto f = SplineField::fit({ax}, 1, {vals});
    for (double x = -0.2; x <= 1.2; x += 0.01) {
        const double xv[1] = {x};
        CHECK(f.eval(0, std::span<const double>(xv, 1)) == doctest::Approx(3.0).epsilon(1e-12));
    }
}

TEST_CASE("knot values reproduced") {
    const auto ax = linspace(0.3, 2.0, 9);
    Eigen::VectorXd vals(9);
    for (int i = 0; i < 9; ++i) vals[i] = std::sin(3.0 * ax[i]);
    const auto f = SplineField::fit({ax}, 1, {vals});
    for (int i = 0; i < 9; ++i) {
        const double xv[1] = {ax[i]};
        CHECK(f.eval(0, std::span<const double>(xv, 1)) ==
              doctest::Approx(vals[i]).epsilon(1e-10));
    }
}

TEST_CASE("not-a-knot reproduces cubics exactly") {
    const auto ax = linspace(0.0, 1.0, 5);
    auto cubic = [](double x) { return 2.0 * x * x * x - x * x + 0.5 * x - 3.0; };
    Eigen::VectorXd vals(5);
    for (int i = 0; i < 5; ++i) vals[i] = cubic(ax[i]);
    const auto f = SplineField::fit({ax}, 1, {vals});
    for (int t = 0; t < 100; ++t) {
        const double x = unif(0.0, 1.0);
        const double xv[1] = {x};
        CHECK(f.eval(0, std::span<const double>(xv, 1)) == doctest::Approx(cubic(x)).epsilon(1e-9));
    }
}

TEST_CASE("two-dimensional polynomial x^2 y") {
    const auto axx = linspace(-1.0, 1.0, 6);
    const auto axy = linspace(0.0, 2.0, 6);
    Eigen::VectorXd vals(36);
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) vals[i * 6 + j] = axx[i] * axx[i] * axy[j];
    const auto f = SplineField::fit({axx, axy}, 1, {vals});
    double maxerr = 0.0;
    for (int t = 0; t < 200; ++t) {
        const double x = unif(-1.0, 1.0), y = unif(0.0, 2.0);
        const double xv[2] = {x, y};
        maxerr = std::max(maxerr,
                          std::abs(f.eval(0, std::span<const double>(xv, 2)) - x * x * y));
    }
    CHECK(maxerr < 1e-8);
}

TEST_CASE("three-dimensional tensor polynomial") {
    const auto ax = linspace(0.0, 1.0, 5);
    Eigen::VectorXd vals(125);
    auto g = [](double x, double y, double z) { return x * x * y + z * z * z - 2.0 * y * z; };
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j)
            for (int k = 0; k < 5; ++k) vals[(i * 5 + j) * 5 + k] = g(ax[i], ax[j], ax[k]);
    const auto f = SplineField::fit({ax, ax, ax}, 1, {vals});
    for (int t = 0; t < 100; ++t) {
        const double x = unif(0, 1), y = unif(0, 1), z = unif(0, 1);
        const double xv[3] = {x, y, z};
        CHECK(f.eval(0, std::span<const double>(xv, 3)) ==
              doctest::Approx(g(x, y, z)).epsilon(1e-8));
    }
}

TEST_CASE("linearity of the fit") {
    const auto ax = linspace(0.0, 1.0, 7);
    Eigen::VectorXd v1(7), v2(7);
    for (int i = 0; i < 7; ++i) {
        v1[i] = std::sin(5.0 * ax[i]);
        v2[i] = std::exp(ax[i]);
    }
    const double a = 2.5, b = -1.25;
    const auto f1 = SplineField::fit({ax}, 1, {v1});
    const auto f2 = SplineField::fit({ax}, 1, {v2});
    const auto fc = SplineField::fit({ax}, 1, {Eigen::VectorXd(a * v1 + b * v2)});
    for (double x = 0.0; x <= 1.0; x += 0.013) {
        const double xv[1] = {x};
        std::span<const double> xs(xv, 1);
        CHECK(fc.eval(0, xs) == doctest::Approx(a * f1.eval(0, xs) + b * f2.eval(0, xs))
                                    .epsilon(1e-10));
    }
}

TEST_CASE("analytic derivative matches finite differences") {
    const auto ax = linspace(0.1, 2.1, 12);
    Eigen::VectorXd vals(12);
    for (int i = 0; i < 12; ++i) vals[i] = std::sin(2.0 * ax[i]) + 0.3 * ax[i] * ax[i];
    const auto f = SplineField::fit({ax}, 1, {vals});
    for (int t = 0; t < 60; ++t) {
        const double x = unif(0.15, 2.05);
        const double h = 1e-6;
        const double xp[1] = {x + h}, xm[1] = {x - h}, xv[1] = {x};
        const double fd = (f.eval(0, std::span<const double>(xp, 1)) -
                           f.eval(0, std::span<const double>(xm, 1))) /
                          (2.0 * h);
        const double an = f.eval_deriv(0, std::span<const double>(xv, 1), 0);
        CHECK(an == doctest::Approx(fd).epsilon(1e-6));
    }
    // Derivative of fitted x^2 at 0.5 equals 1.
    Eigen::VectorXd sq(12);
    for (int i = 0; i < 12; ++i) sq[i] = ax[i] * ax[i];
    const auto fsq = SplineField::fit({ax}, 1, {sq});
    const double x5[1] = {0.5};
    CHECK(fsq.eval_deriv(0, std::span<const double>(x5, 1), 0) == doctest::Approx(1.0).epsilon(1e-9));
    // Derivative of a constant field is 0.
    const auto fc = SplineField::fit({ax}, 1, {Eigen::VectorXd(Eigen::VectorXd::Constant(12, 7.0))});
    CHECK(fc.eval_deriv(0, std::span<const double>(x5, 1), 0) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("gradient and Hessian in two dimensions") {
    const auto ax = linspace(0.0, 1.0, 8);
    Eigen::VectorXd vals(64);
    auto g = [](double x, double y) { return x * x * x - 2.0 * x * y * y + y; };
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) vals[i * 8 + j] = g(ax[i], ax[j]);
    const auto f = SplineField::fit({ax, ax}, 1, {vals});
    for (int t = 0; t < 40; ++t) {
        const double x = unif(0.05, 0.95), y = unif(0.05, 0.95);
        const double xv[2] = {x, y};
        double v, grad[2], hess[4];
        f.eval_all(0, std::span<const double>(xv, 2), v, grad, hess);
        CHECK(v == doctest::Approx(g(x, y)).epsilon(1e-8));
        CHECK(grad[0] == doctest::Approx(3 * x * x - 2 * y * y).epsilon(1e-6));
        CHECK(grad[1] == doctest::Approx(-4 * x * y + 1).epsilon(1e-6));
        CHECK(hess[0] == doctest::Approx(6 * x).epsilon(1e-5));
        CHECK(hess[1] == doctest::Approx(-4 * y).epsilon(1e-5));
        CHECK(hess[2] == doctest::Approx(-4 * y).epsilon(1e-5));
        CHECK(hess[3] == doctest::Approx(-4 * x).epsilon(1e-5));
    }
}

TEST_CASE("midpoint of a linear function interpolates exactly") {
    const auto ax = linspace(0.0, 4.0, 5);
    Eigen::VectorXd vals(5);
    for (int i = 0; i < 5; ++i) vals[i] = 3.0 * ax[i] - 1.0;
    const auto f = SplineField::fit({ax}, 1, {vals});
    const double xv[1] = {1.5};
    CHECK(f.eval(0, std::span<const double>(xv, 1)) == doctest::Approx(3.5).epsilon(1e-12));
}

TEST_CASE("out-of-hull evaluation is flagged and constant-slope") {
    const auto ax = linspace(0.0, 1.0, 6);
    Eigen::VectorXd vals(6);
    for (int i = 0; i < 6; ++i) vals[i] = ax[i] * ax[i];
    const auto f = SplineField::fit({ax}, 1, {vals});
    bool flag = false;
    const double x1[1] = {1.3};
    const double v = f.eval(0, std::span<const double>(x1, 1), &flag);
    CHECK(flag);
    const double x0[1] = {1.0};
    const double slope = f.eval_deriv(0, std::span<const double>(x0, 1), 0);
    CHECK(v == doctest::Approx(1.0 + 0.3 * slope).epsilon(1e-12));
    flag = false;
    const double xin[1] = {0.5};
    f.eval(0, std::span<const double>(xin, 1), &flag);
    CHECK_FALSE(flag);
    // Outside, the derivative equals the boundary slope.
    const double x2[1] = {1.7};
    CHECK(f.eval_deriv(0, std::span<const double>(x2, 1), 0) == doctest::Approx(slope).epsilon(1e-12));
}

TEST_CASE("shape and knot validation") {
    const auto ax = linspace(0.0, 1.0, 6);
    Eigen::VectorXd bad(5);
    bad.setZero();
    CHECK_THROWS_AS(SplineField::fit({ax}, 1, {bad}), ConfigError);
    Eigen::VectorXd nonmono(4);
    nonmono << 0.0, 0.5, 0.5, 1.0;
    Eigen::VectorXd v4 = Eigen::VectorXd::Zero(4);
    CHECK_THROWS_AS(SplineField::fit({nonmono}, 1, {v4}), ConfigError);
    Eigen::VectorXd three = linspace(0.0, 1.0, 3);
    Eigen::VectorXd v3 = Eigen::VectorXd::Zero(3);
    CHECK_THROWS_AS(SplineField::fit({three}, 1, {v3}), ConfigError);

    const auto f = SplineField::fit({ax}, 2, {Eigen::VectorXd::Zero(6), Eigen::VectorXd::Zero(6)});
    const double xv[1] = {0.5};
    CHECK_THROWS_AS(f.eval(5, std::span<const double>(xv, 1)), std::out_of_range);
}

TEST_CASE("serialization round trip is bit exact") {
    const auto axx = linspace(-2.0, 3.0, 9);
    const auto axy = linspace(0.5, 1.5, 5);
    std::vector<Eigen::VectorXd> vals(3, Eigen::VectorXd(45));
    for (int s = 0; s < 3; ++s)
        for (int i = 0; i < 45; ++i) vals[s][i] = std::sin(0.77 * i + s) * 1e3;
    const auto f = SplineField::fit({axx, axy}, 3, vals);
    std::stringstream ss;
    f.save(ss);
    const auto g = SplineField::load(ss);
    CHECK(f.bit_identical(g));

    // Truncated stream is an integrity error.
    std::string blob = ss.str();
    std::stringstream trunc(blob.substr(0, blob.size() / 2));
    CHECK_THROWS_AS(SplineField::load(trunc), ConfigError);
}

TEST_CASE("repeated evaluation is bit identical") {
    const auto ax = linspace(0.0, 1.0, 7);
    Eigen::VectorXd vals(7);
    for (int i = 0; i < 7; ++i) vals[i] = std::cos(ax[i]);
    const auto f = SplineField::fit({ax}, 1, {vals});
    const double xv[1] = {0.337};
    std::span<const double> xs(xv, 1);
    const double a = f.eval(0, xs);
    const double b = f.eval(0, xs);
    CHECK(std::memcmp(&a, &b, sizeof(double)) == 0);
}
