#pragma once
#include <Eigen/Dense>

#include "mpru/params.hpp"

namespace mpru {

// Joint finite Markov chain over (Z, zeta). States 0..n_z-1 are the normal
// productivity nodes with zeta = 1; the last state is the disaster state
// (Z_disaster, zeta_low).
struct ShockChain {
    Eigen::VectorXd z_values;
    Eigen::VectorXd zeta_values;
    Eigen::MatrixXd P;           // row-stochastic transition matrix
    Eigen::VectorXd stationary;  // left fixed point of P

    int n() const { return static_cast<int>(z_values.size()); }
    int disaster_index() const { return n() - 1; }
    bool is_disaster(int i) const { return i == disaster_index(); }
    int median_normal_index() const { return (n() - 1) / 2; }
};

// Equal-spaced grid over +/- span_std unconditional standard deviations with
// Gaussian-CDF bucket transition probabilities.
void discretize_productivity(double rho_Z, double sigma_eps, int n_z,
                             Eigen::VectorXd& z_grid, Eigen::MatrixXd& P_z,
                             double span_std = 2.1);

// Stationary distribution of a row-stochastic matrix (unit left eigenvector).
Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& P);

// Appends the disaster state to a productivity chain. From any normal state
// the chain enters disaster with pi_enter and otherwise follows P_z scaled by
// (1 - pi_enter); from disaster it stays with 1 - pi_exit and exits into the
// normal states weighted by their stationary distribution.
ShockChain build_shock_chain(const Eigen::VectorXd& z_grid, const Eigen::MatrixXd& P_z,
                             const ModelParams& p);

// Convenience: discretize + build with parameters from p.
ShockChain make_shock_chain(const ModelParams& p);

}  // namespace mpru
