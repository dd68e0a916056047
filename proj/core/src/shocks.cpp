#include "mpru/shocks.hpp"

#include <cmath>

#include "mpru/errors.hpp"

namespace mpru {

namespace {
double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }
}

void discretize_productivity(double rho_Z, double sigma_eps, int n_z,
                             Eigen::VectorXd& z_grid, Eigen::MatrixXd& P_z,
                             double span_std) {
    if (n_z < 2) throw ConfigError("discretize_productivity: grid size must be at least 2");
    if (!(std::abs(rho_Z) < 1.0)) throw ConfigError("discretize_productivity: |rho_Z| must be below 1");
    if (!(sigma_eps >= 0.0)) throw ConfigError("discretize_productivity: sigma_eps must be nonnegative");

    const double sig_unc = sigma_eps / std::sqrt(1.0 - rho_Z * rho_Z);
    z_grid.resize(n_z);
    const double lo = -span_std * sig_unc, hi = span_std * sig_unc;
    for (int i = 0; i < n_z; ++i)
        z_grid[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n_z - 1);
    const double step = (n_z > 1) ? z_grid[1] - z_grid[0] : 0.0;

    P_z.resize(n_z, n_z);
    for (int i = 0; i < n_z; ++i) {
        const double m = rho_Z * z_grid[i];
        if (sigma_eps <= 0.0 || step <= 0.0) {
            // Degenerate innovation: all mass on the nearest node, ties
            // resolved toward the middle of the grid.
            P_z.row(i).setZero();
            const int mid = (n_z - 1) / 2;
            int jbest = 0;
            for (int j = 1; j < n_z; ++j) {
                const double dj = std::abs(z_grid[j] - m), db = std::abs(z_grid[jbest] - m);
                if (dj < db - 1e-300 ||
                    (dj <= db && std::abs(j - mid) < std::abs(jbest - mid)))
                    jbest = j;
            }
            P_z(i, jbest) = 1.0;
            continue;
        }
        for (int j = 0; j < n_z; ++j) {
            const double zlo = (z_grid[j] - m - step / 2.0) / sigma_eps;
            const double zhi = (z_grid[j] - m + step / 2.0) / sigma_eps;
            if (j == 0)
                P_z(i, j) = normal_cdf(zhi);
            else if (j == n_z - 1)
                P_z(i, j) = 1.0 - normal_cdf(zlo);
            else
                P_z(i, j) = normal_cdf(zhi) - normal_cdf(zlo);
        }
        P_z.row(i) /= P_z.row(i).sum();
    }
}

Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& P) {
    const int n = static_cast<int>(P.rows());
    // Solve pi (P - I) = 0 with the normalization sum(pi) = 1 as a least
    // squares system; exact for an irreducible chain.
    Eigen::MatrixXd A = P.transpose() - Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXd M(n + 1, n);
    M.topRows(n) = A;
    M.bottomRows(1).setOnes();
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n + 1);
    b[n] = 1.0;
    Eigen::VectorXd pi = M.colPivHouseholderQr().solve(b);
    // Clean tiny negative round-off and renormalize.
    for (int i = 0; i < n; ++i) pi[i] = std::max(pi[i], 0.0);
    pi /= pi.sum();
    return pi;
}

ShockChain build_shock_chain(const Eigen::VectorXd& z_grid, const Eigen::MatrixXd& P_z,
                             const ModelParams& p) {
    const int nz = static_cast<int>(z_grid.size());
    if (P_z.rows() != nz || P_z.cols() != nz)
        throw ConfigError("build_shock_chain: transition matrix shape does not match grid");
    for (int i = 0; i < nz; ++i) {
        if (std::abs(P_z.row(i).sum() - 1.0) > 1e-10)
            throw ConfigError("build_shock_chain: productivity chain row " + std::to_string(i) +
                              " does not sum to 1");
    }

    const Eigen::VectorXd pi_z = stationary_distribution(P_z);
    const int n = nz + 1;
    ShockChain c;
    c.z_values.resize(n);
    c.zeta_values.resize(n);
    c.z_values.head(nz) = z_grid;
    c.zeta_values.head(nz).setOnes();
    c.z_values[nz] = p.Z_disaster;
    c.zeta_values[nz] = p.zeta_low;

    c.P = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < nz; ++i) {
        c.P.row(i).head(nz) = (1.0 - p.pi_enter) * P_z.row(i);
        c.P(i, nz) = p.pi_enter;
    }
    c.P.row(nz).head(nz) = p.pi_exit * pi_z.transpose();
    c.P(nz, nz) = 1.0 - p.pi_exit;

    c.stationary = stationary_distribution(c.P);
    return c;
}

ShockChain make_shock_chain(const ModelParams& p) {
    Eigen::VectorXd z_grid;
    Eigen::MatrixXd P_z;
    discretize_productivity(p.rho_Z, p.sigma_eps, p.n_z, z_grid, P_z, p.z_span_std);
    return build_shock_chain(z_grid, P_z, p);
}

}  // namespace mpru
