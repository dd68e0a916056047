#pragma once
#include <cstdint>
#include <iosfwd>
#include <string>

namespace mpru {

// All model parameters (quarterly calibration) plus the numerical settings
// of the solvers. Defaults reproduce the baseline calibration; every key can
// be overridden from a flat key-value config file.
struct ModelParams {
    // --- preferences and technology ---
    double beta = 0.97;           // discount factor
    double gamma = 2.0;           // relative risk aversion
    double nu = 1.0;              // inverse Frisch elasticity
    double psi = 1.0;             // labor disutility scale
    double xi = 0.80;             // capital production curvature
    double A_cap = 1.25;          // capital production scale
    double alpha = 0.36;          // capital share
    double delta = 0.025;         // depreciation rate

    // --- shock process ---
    double rho_Z = 0.90;          // AR(1) persistence of log productivity
    double sigma_eps = 0.08;      // innovation std dev
    double Z_disaster = -0.15;    // disaster log productivity
    double zeta_low = 0.95;       // capital quality in bad state
    double pi_enter = 0.005;      // prob. of switching into disaster
    double pi_exit = 0.34;        // prob. of exiting disaster

    // --- planner ---
    double lambda_weight = 0.01;  // Pareto weight on experts

    // --- shock discretization ---
    int n_z = 7;                  // productivity grid size (normal states)
    double z_span_std = 2.1;      // grid span in unconditional std devs

    // --- competitive equilibrium grids ---
    int ce_n_K = 12;
    int ce_n_D = 20;                  // knots along the deposits-to-capital axis
    double K_lo_frac = 0.60;          // K grid bounds as fractions of det. SS K
    double K_hi_frac = 1.45;
    double ce_dtil_lo = 0.0;          // D/K grid bounds
    double ce_dtil_hi = 1.00;
    int ce_homotopy_stages = 5;
    double ti_damping = 0.5;
    double ti_tol = 1e-9;         // time-iteration sup-norm stop
    int ti_max_iter = 2000;
    double newton_basin = 0.25;   // residual norm below which polish starts
    double newton_tol = 1e-11;    // polish target at collocation points
    int newton_max_iter = 60;
    double block_tol = 1e-11;     // per-point 3x3 Newton tolerance
    int block_max_iter = 60;

    // --- first best ---
    int fb_n_K = 24;
    double fb_tol = 1e-9;
    int fb_max_iter = 4000;

    // --- Ramsey ---
    int ram_n_K = 10;
    int ram_n_D = 12;
    int ram_n_mu = 9;
    double mu_abs_max = 0.5;
    double ram_dtil_hi = 1.05;
    int nu_homotopy_stages = 8;
    double nu_homotopy_start = 1000.0;
    double vfi_tol = 1e-8;
    int vfi_max_iter = 3000;
    int howard_steps = 30;
    double stage_tol = 1e-10;     // per-point stage FOC tolerance
    int stage_max_iter = 80;
    int polish_sweeps = 400;      // policy-polish iteration cap
    double polish_tol = 1e-10;

    // --- simulation ---
    long long sim_length = 1000000;
    long long sim_burn_in = 10000;
    std::uint64_t seed = 20240615;

    // --- simple rule optimizer ---
    double rule_d1_lo = 0.0, rule_d1_hi = 0.30;
    double rule_d2_lo = 0.30, rule_d2_hi = 0.95;
    int rule_grid_n = 11;
    int rule_criterion_states = 200;
    double rule_polish_tol = 1e-4;

    // Throws ConfigError if any invariant fails (beta in (0,1), etc.).
    void validate() const;

    // Flat key-value round trip. Unknown keys are an error; missing keys
    // keep their defaults.
    static ModelParams from_file(const std::string& path);
    static ModelParams from_stream(std::istream& in, const std::string& origin);
    void to_stream(std::ostream& out) const;
    void to_file(const std::string& path) const;

    // FNV-1a hash of the canonical serialization; stored in checkpoints so
    // runs can refuse mismatched inputs.
    std::uint64_t hash() const;
};

}  // namespace mpru
