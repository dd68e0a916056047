#include "doctest.h"

#include <Eigen/Dense>
#include <cmath>

#include "mpru/errors.hpp"
#include "mpru/params.hpp"
#include "mpru/shocks.hpp"

using namespace mpru;

namespace {
// Moment oracle: stationary distribution by eigenvector, implied first
// moments by direct summation over the chain.
struct Moments {
    double std_dev, autocorr;
};
Moments chain_moments(const Eigen::VectorXd& z, const Eigen::MatrixXd& P) {
    const Eigen::VectorXd pi = stationary_distribution(P);
    const double mean = pi.dot(z);
    double var = 0.0, cov = 0.0;
    for (int i = 0; i < z.size(); ++i) {
        var += pi[i] * (z[i] - mean) * (z[i] - mean);
        for (int j = 0; j < z.size(); ++j)
            cov += pi[i] * P(i, j) * (z[i] - mean) * (z[j] - mean);
    }
    return {std::sqrt(var), cov / var};
}
}  // namespace

TEST_CASE("zero-persistence chain is iid") {
    Eigen::VectorXd z;
    Eigen::MatrixXd P;
    discretize_productivity(0.0, 0.08, 5, z, P);
    for (int i = 1; i < 5; ++i)
        for (int j = 0; j < 5; ++j) CHECK(P(i, j) == doctest::Approx(P(0, j)).epsilon(1e-12));
}

TEST_CASE("discretization matches AR(1) moments for n_z >= 7") {
    for (int n : {7, 9, 11}) {
        Eigen::VectorXd z;
        Eigen::MatrixXd P;
        discretize_productivity(0.9, 0.08, n, z, P);
        const Moments m = chain_moments(z, P);
        const double target_std = 0.08 / std::sqrt(1.0 - 0.81);
        CHECK(std::abs(m.std_dev - target_std) / target_std < 0.05);
        CHECK(std::abs(m.autocorr - 0.9) < 0.02);
        for (int i = 0; i < n; ++i) CHECK(P.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("degenerate innovation absorbs at the middle node") {
    Eigen::VectorXd z;
    Eigen::MatrixXd P;
    discretize_productivity(0.9, 0.0, 5, z, P);
    CHECK(P(2, 2) == doctest::Approx(1.0));
    // All states eventually walk toward the middle.
    Eigen::MatrixXd Pk = P;
    for (int k = 0; k < 100; ++k) Pk = Pk * P;
    for (int i = 0; i < 5; ++i) CHECK(Pk(i, 2) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("grid size below 2 is a configuration error") {
    Eigen::VectorXd z;
    Eigen::MatrixXd P;
    CHECK_THROWS_AS(discretize_productivity(0.9, 0.08, 1, z, P), ConfigError);
}

TEST_CASE("joint chain structure") {
    ModelParams p;
    const ShockChain c = make_shock_chain(p);
    CHECK(c.n() == p.n_z + 1);

    for (int i = 0; i < c.n(); ++i) {
        CHECK(c.P.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
        for (int j = 0; j < c.n(); ++j) CHECK(c.P(i, j) >= 0.0);
    }
    // Exactly the disaster state carries (Z_disaster, zeta_low).
    for (int i = 0; i < c.n(); ++i) {
        if (c.is_disaster(i)) {
            CHECK(c.zeta_values[i] == doctest::Approx(p.zeta_low));
            CHECK(c.z_values[i] == doctest::Approx(p.Z_disaster));
        } else {
            CHECK(c.zeta_values[i] == doctest::Approx(1.0));
        }
    }
    // From any normal state, disaster entry probability is pi_enter.
    for (int i = 0; i < p.n_z; ++i) CHECK(c.P(i, c.disaster_index()) == doctest::Approx(p.pi_enter));
    CHECK(c.P(c.disaster_index(), c.disaster_index()) == doctest::Approx(1.0 - p.pi_exit));
}

TEST_CASE("stationary distribution is a fixed point with the closed-form disaster mass") {
    ModelParams p;
    const ShockChain c = make_shock_chain(p);
    const Eigen::VectorXd piP = c.P.transpose() * c.stationary;
    CHECK((piP - c.stationary).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(c.stationary.sum() == doctest::Approx(1.0).epsilon(1e-12));
    // Two-state marginal chain closed form: pi_enter / (pi_enter + pi_exit).
    CHECK(std::abs(c.stationary[c.disaster_index()] - 0.005 / 0.345) < 1e-10);
}

TEST_CASE("disaster unreachable when pi_enter = 0") {
    ModelParams p;
    p.pi_enter = 0.0;
    const ShockChain c = make_shock_chain(p);
    for (int i = 0; i < p.n_z; ++i) CHECK(c.P(i, c.disaster_index()) == 0.0);
    CHECK(c.stationary[c.disaster_index()] == doctest::Approx(0.0).epsilon(1e-12));
}
