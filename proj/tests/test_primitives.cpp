#include "doctest.h"

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <cmath>
#include <random>
#include <stdexcept>

#include "mpru/params.hpp"
#include "mpru/primitives.hpp"

using namespace mpru;
namespace mp = boost::multiprecision;
using big = mp::cpp_bin_float_50;

namespace {
ModelParams table1() { return ModelParams{}; }

double central_diff(const std::function<double(double)>& f, double x, double h) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}
}  // namespace

TEST_CASE("worker utility at reference points") {
    ModelParams p = table1();
    auto u = utility_worker(1.0, 0.0, p);
    CHECK(u.u == doctest::Approx(-1.0).epsilon(1e-14));
    CHECK(u.u_c == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(u.u_l == doctest::Approx(0.0).epsilon(1e-14));

    auto u2 = utility_worker(1.0, 1.0, p);
    CHECK(u2.u == doctest::Approx(-1.5).epsilon(1e-14));
    CHECK(u2.u_c == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(u2.u_l == doctest::Approx(-1.0).epsilon(1e-14));

    // High-precision oracle for the closed form at (c=2, l=0.5).
    const big c = 2, l = big("0.5"), g = 2, psi = 1, nu = 1;
    const big uo = mp::pow(c, 1 - g) / (1 - g) - psi * mp::pow(l, 1 + nu) / (1 + nu);
    auto u3 = utility_worker(2.0, 0.5, p);
    CHECK(u3.u == doctest::Approx(static_cast<double>(uo)).epsilon(1e-14));
    CHECK(u3.u_c == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(u3.u_l == doctest::Approx(-0.5).epsilon(1e-14));
}

TEST_CASE("worker utility rejects nonpositive consumption") {
    ModelParams p = table1();
    CHECK_THROWS_AS(utility_worker(0.0, 0.5, p), std::domain_error);
    CHECK_THROWS_AS(utility_worker(-1.0, 0.5, p), std::domain_error);
    CHECK_THROWS_AS(utility_worker(1.0, -0.1, p), std::domain_error);
}

TEST_CASE("expert utility values") {
    ModelParams p = table1();
    CHECK(utility_expert(1.0, p).u == doctest::Approx(-1.0).epsilon(1e-14));
    CHECK(utility_expert(1.0, p).u_c == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(utility_expert(4.0, p).u == doctest::Approx(-0.25).epsilon(1e-14));
    CHECK(utility_expert(4.0, p).u_c == doctest::Approx(0.0625).epsilon(1e-14));
    CHECK(utility_expert(0.5, p).u_c == doctest::Approx(4.0).epsilon(1e-14));
    CHECK_THROWS_AS(utility_expert(0.0, p), std::domain_error);
}

TEST_CASE("log utility branch at gamma = 1") {
    ModelParams p = table1();
    p.gamma = 1.0;
    CHECK(utility_expert(std::exp(1.0), p).u == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(utility_expert(2.0, p).u_c == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(utility_worker(1.0, 0.0, p).u == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("marginal utilities match finite differences") {
    ModelParams p = table1();
    std::mt19937_64 rng(7);
    auto unif = [&](double lo, double hi) {
        return lo + (hi - lo) * static_cast<double>(rng() >> 11) * 0x1.0p-53;
    };
    for (int i = 0; i < 50; ++i) {
        const double c = unif(0.2, 3.0), l = unif(0.1, 2.0);
        const double h = 1e-5;
        const double fd_c = central_diff([&](double x) { return utility_worker(x, l, p).u; }, c, h);
        const double fd_l = central_diff([&](double x) { return utility_worker(c, x, p).u; }, l, h);
        auto u = utility_worker(c, l, p);
        CHECK(u.u_c == doctest::Approx(fd_c).epsilon(1e-6));
        CHECK(u.u_l == doctest::Approx(fd_l).epsilon(1e-6));
        auto ue = utility_expert(c, p);
        const double fd_e = central_diff([&](double x) { return utility_expert(x, p).u; }, c, h);
        CHECK(ue.u_c == doctest::Approx(fd_e).epsilon(1e-6));
    }
}

TEST_CASE("capital production anchor points") {
    ModelParams p = table1();
    auto cp = capital_production(p.delta, p);
    CHECK(cp.phi == doctest::Approx(p.delta).epsilon(1e-14));
    CHECK(cp.phi_prime == doctest::Approx(1.0).epsilon(1e-14));

    ModelParams lin = table1();
    lin.xi = 1.0;
    for (double x : {-0.1, 0.0, 0.025, 0.08, 0.3}) {
        auto c = capital_production(x, lin);
        CHECK(c.phi == doctest::Approx(x).epsilon(1e-13));
        CHECK(c.phi_prime == doctest::Approx(1.0).epsilon(1e-13));
    }

    // High-precision oracle at x = 0.05 under baseline parameters.
    auto c5 = capital_production(0.05, p);
    CHECK(c5.phi == doctest::Approx(0.049922835106348539756).epsilon(1e-14));
    CHECK(c5.phi_prime == doctest::Approx(0.99386456737585312946).epsilon(1e-14));

    CHECK_THROWS_AS(capital_production(-10.0, p), std::domain_error);
}

TEST_CASE("capital production derivative vs finite differences and concavity") {
    ModelParams p = table1();
    for (double x : {-0.05, 0.0, 0.025, 0.06, 0.2}) {
        auto c = capital_production(x, p);
        const double fd = central_diff([&](double y) { return capital_production(y, p).phi; }, x, 1e-6);
        CHECK(c.phi_prime == doctest::Approx(fd).epsilon(1e-6));
        const double fd2 =
            central_diff([&](double y) { return capital_production(y, p).phi_prime; }, x, 1e-6);
        CHECK(c.phi_second == doctest::Approx(fd2).epsilon(1e-5));
        CHECK(c.phi_second < 0.0);  // concave for xi < 1
        CHECK(c.phi_prime > 0.0);
    }
}

TEST_CASE("production function and factor prices") {
    ModelParams p = table1();
    auto pr = production(0.0, 1.0, 1.0, p);
    CHECK(pr.Y == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(pr.R == doctest::Approx(0.36).epsilon(1e-14));
    CHECK(pr.W == doctest::Approx(0.64).epsilon(1e-14));

    // High-precision oracle at (Z=-0.15, K=2, L=0.8).
    auto pr2 = production(-0.15, 2.0, 0.8, p);
    CHECK(pr2.Y == doctest::Approx(0.9576442774779668222).epsilon(1e-14));
    CHECK(pr2.R == doctest::Approx(0.172375969946034028).epsilon(1e-14));
    CHECK(pr2.W == doctest::Approx(0.76611542198237345776).epsilon(1e-14));

    std::mt19937_64 rng(11);
    auto unif = [&](double lo, double hi) {
        return lo + (hi - lo) * static_cast<double>(rng() >> 11) * 0x1.0p-53;
    };
    for (int i = 0; i < 50; ++i) {
        const double Z = unif(-0.5, 0.5), K = unif(0.5, 20.0), L = unif(0.2, 2.0);
        auto q = production(Z, K, L, p);
        CHECK(q.R * K + q.W * L == doctest::Approx(q.Y).epsilon(1e-12));
        const double fdK = central_diff([&](double x) { return production(Z, x, L, p).Y; }, K, 1e-5 * K);
        const double fdL = central_diff([&](double x) { return production(Z, K, x, p).Y; }, L, 1e-5 * L);
        CHECK(q.R == doctest::Approx(fdK).epsilon(1e-6));
        CHECK(q.W == doctest::Approx(fdL).epsilon(1e-6));
    }
    CHECK_THROWS_AS(production(0.0, 0.0, 1.0, p), std::domain_error);
    CHECK_THROWS_AS(production(0.0, 1.0, 0.0, p), std::domain_error);
}

TEST_CASE("capital price and profit") {
    ModelParams p = table1();
    auto cp = capital_price_and_profit(p.delta, p);
    CHECK(cp.q == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(cp.Pi == doctest::Approx(0.0).epsilon(1e-14));

    ModelParams lin = table1();
    lin.xi = 1.0;
    for (double x : {-0.1, 0.05, 0.2}) {
        auto c = capital_price_and_profit(x, lin);
        CHECK(c.q == doctest::Approx(1.0).epsilon(1e-13));
        CHECK(c.Pi == doctest::Approx(0.0).epsilon(1e-13));
    }

    auto c5 = capital_price_and_profit(0.05, p);
    CHECK(c5.q > 1.0);
    CHECK(c5.q == doctest::Approx(1.0061733085427791624).epsilon(1e-14));
    CHECK(c5.Pi == doctest::Approx(0.00023102417079031667045).epsilon(1e-12));
}

TEST_CASE("population measures to Pareto weights") {
    ModelParams p = table1();
    CHECK(measures_to_weights(0.5, p).lambda_weight == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(measures_to_weights(0.5, p).psi_hat == doctest::Approx(0.125).epsilon(1e-14));

    // Inverting lambda = 0.01 at gamma = 2: theta/(1-theta) = sqrt(lambda/(1-lambda)).
    const double theta = 0.091325248684348974973;
    CHECK(measures_to_weights(theta, p).lambda_weight == doctest::Approx(0.01).epsilon(1e-12));

    double prev = 0.0;
    for (double t = 0.05; t < 1.0; t += 0.05) {
        const double lam = measures_to_weights(t, p).lambda_weight;
        CHECK(lam > prev);
        prev = lam;
    }
    CHECK_THROWS_AS(measures_to_weights(0.0, p), std::domain_error);
    CHECK_THROWS_AS(measures_to_weights(1.0, p), std::domain_error);
}
