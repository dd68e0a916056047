#pragma once
#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <array>
#include <string>
#include <vector>

#include "mpru/params.hpp"
#include "mpru/shocks.hpp"
#include "mpru/spline.hpp"
#include "mpru/state.hpp"
#include "mpru/taxes.hpp"

namespace mpru {

// Collocation grid over (K, D/K), replicated per shock slice. Deposits enter
// as a ratio so every grid point stays inside the experts' natural borrowing
// limit regardless of the capital level.
struct CEGrid {
    Eigen::VectorXd K_knots;
    Eigen::VectorXd dtil_knots;  // deposits-to-capital ratio

    int n_K() const { return static_cast<int>(K_knots.size()); }
    int n_dtil() const { return static_cast<int>(dtil_knots.size()); }
    int points() const { return n_K() * n_dtil(); }
    int flat(int iK, int id) const { return iK * n_dtil() + id; }
    double K(int idx) const { return K_knots[idx / n_dtil()]; }
    double dtil(int idx) const { return dtil_knots[idx % n_dtil()]; }

    static CEGrid make(const ModelParams& p);         // CE defaults
    static CEGrid make_ramsey_base(const ModelParams& p);  // Ramsey (K, D/K) part
};

// Values of the four unknown policy fields at the collocation points, one
// flattened vector per shock slice. This is the object time iteration maps.
struct PolicyFieldValues {
    std::vector<Eigen::VectorXd> C_w, C_e, L, D_next;

    static PolicyFieldValues zeros(int slices, int points);
    double sup_distance(const PolicyFieldValues& other) const;
    void mix_from(const PolicyFieldValues& next, double omega);  // this = (1-w)*this + w*next
};

// Continuation splines for the fields entering expectations.
struct ContinuationFields {
    SplineField C_w, C_e, L, D_next;
};

// Normalized residuals of the eight equilibrium conditions: labor supply,
// worker Euler, expert Euler, capital arbitrage, capital price, resource
// constraint, capital law of motion, worker budget.
struct FullResiduals {
    std::array<double, 8> res{};
    bool extrapolated = false;
};

struct ResidualReport {
    std::array<double, 8> max_abs{};
    std::array<double, 8> mean_abs{};
    int points = 0;
    int extrapolated_points = 0;
    double worst() const;
    std::string summary() const;
};

struct RiskMetrics {
    double risk_premium;
    double vol_logCw;
    double vol_logCe;
};

class EquilibriumSolution;

// Everything the per-point system produces: residuals, their derivatives
// with respect to the point unknowns and the deposit choice, and (optionally)
// the partials with respect to the continuation evaluations needed by the
// stacked Newton.
struct CEPointEval {
    double cw, ce, l;
    double Y, W, Rr, I, x, q, Pi, Khat;
    double tau_l, tau_d, tau_k;
    double uwc, uwl, uec;
    double Ew, Ee, Epay;
    double r, sav, Dnext_budget;
    std::array<double, 3> res;                  // wedge-normalized residuals
    std::array<std::array<double, 3>, 3> dres;  // d res / d (cw, ce, l) levels
    std::array<double, 3> dres_dDp;
    double B;                                   // scaled budget residual
    std::array<double, 3> dB;
    double dB_dDp;
    bool extrapolated = false;

    struct SuccessorPartials {
        double Kp, dtp;                          // continuation evaluation point
        std::array<std::array<double, 3>, 3> dres_de;  // d res_k / d (cw',ce',l')
        std::array<double, 3> dB_de;
    };
    std::vector<SuccessorPartials> succ;
};

// Solves the recursive competitive equilibrium under a caller-supplied tax
// schedule by time iteration on a per-point 3x3 system in (C_w, C_e, L) with
// analytic Jacobians, followed by a sparse Newton polish of the stacked
// collocation system.
class CESolver {
public:
    CESolver(const ModelParams& p, const TaxSchedule& taxes, const CEGrid& grid,
             const ShockChain& chain);

    const CEGrid& grid() const { return grid_; }
    const ShockChain& chain() const { return chain_; }
    const ModelParams& params() const { return params_; }

    // Per-point residual system at a fixed deposit choice Dbar. level 0
    // computes residuals only, 1 adds the local Jacobian, 2 adds the
    // successor partials for the stacked Newton.
    CEPointEval eval_point(int slice, int point, double cw, double ce, double l, double Dbar,
                           const ContinuationFields& cont, int level) const;


    ContinuationFields fit_fields(const PolicyFieldValues& v) const;

    // Solves the 3x3 block at one collocation point by damped Newton in log
    // coordinates. Throws SolverError naming the point on failure.
    void solve_block(int slice, int point, const ContinuationFields& cont, double Dbar,
                     double& cw, double& ce, double& l, double& Dnext_out,
                     double* residual_at_guess = nullptr) const;

    // One undamped time-iteration step: solves every block against the
    // continuation implied by c1. residual_sup, if given, receives the sup of
    // the wedge residuals evaluated at c1 itself.
    PolicyFieldValues time_iteration_step(const PolicyFieldValues& c1,
                                          double* residual_sup = nullptr) const;

    // Sparse Newton on the stacked collocation system (unknowns are the
    // B-spline coefficients of all four fields). Requires the residual norm
    // at c_init to be inside the Newton basin; throws SolverError on
    // divergence.
    PolicyFieldValues newton_polish(const PolicyFieldValues& c_init) const;

    // Stacked residual vector and (optionally) its analytic sparse Jacobian
    // at a coefficient state; returns false on a domain violation. The
    // unknown ordering is field-major then slice then coefficient.
    bool assemble_stacked(const ContinuationFields& f, Eigen::VectorXd& G,
                          Eigen::SparseMatrix<double>* J) const;
    Eigen::VectorXd pack_coefficients(const ContinuationFields& f) const;
    void unpack_coefficients(const Eigen::VectorXd& u, ContinuationFields& f) const;

    // Damped time iteration until the residual norm enters the Newton basin
    // (or the iterate stops moving), then polish.
    PolicyFieldValues run_stage(PolicyFieldValues values, double target_resid) const;

    PolicyFieldValues initial_guess() const;

    double residual_sup_norm(const PolicyFieldValues& v) const;

    EquilibriumSolution finish(const PolicyFieldValues& v) const;

private:
    ModelParams params_;
    TaxSchedule taxes_;
    CEGrid grid_;
    ShockChain chain_;
    double D_scale_;
    double wK_ = 0.0, wD_ = 0.0;  // smooth projection widths
};

// A solved competitive equilibrium: policy fields over (K, D/K) per shock
// index plus derived price and law-of-motion fields, the tax schedule and a
// residual certification report.
class EquilibriumSolution {
public:
    ModelParams params;
    ShockChain shock_chain;
    TaxSchedule taxes;
    CEGrid grid;
    SplineField C_w, C_e, L, D_next;       // solved fields
    SplineField I, r, q, K_next;           // derived at collocation, refit
    ResidualReport residual_report;

    struct Choices {
        double C_w, C_e, L, D_next;
        double tau_l, tau_d, tau_k;
        bool extrapolated;
    };
    Choices choices_at(const AggregateState& s) const;

    struct Derived {
        Choices ch;
        double Y, W, Rr, I, x, q, Pi, Khat, r_budget, T;
    };
    // Closed-form objects implied by the policy choices at a state; r_budget
    // is the rate that makes the worker budget hold exactly.
    Derived derived_at(const AggregateState& s) const;

    // Stored-field evaluations (used by residual certification).
    double r_hat(const AggregateState& s) const;
    double q_hat(const AggregateState& s) const;
    double I_hat(const AggregateState& s) const;
    double Knext_hat(const AggregateState& s) const;

    RiskMetrics risk_metrics(const AggregateState& s) const;

    // The grid box is the operative state space; successor states are
    // projected onto it.
    double project_capital(double K_next) const;
    double project_deposits(double D_next, double K_next) const;

    // All eight equilibrium-condition residuals at a state, evaluated against
    // the stored fields (wedge-normalized).
    FullResiduals equation_residuals(const AggregateState& s) const;

    // Residual certification over a deterministic off-grid sample of
    // density_factor times the collocation count.
    ResidualReport certify(int density_factor = 10, std::uint64_t seed = 971) const;
};

// Full homotopy solve: sigma_eps from ~0, gamma from 1 and xi from 1 move to
// their targets over ce_homotopy_stages joint stages, each stage time
// iterating and then Newton polishing.
EquilibriumSolution solve_equilibrium(const ModelParams& p, const TaxSchedule& taxes);
inline EquilibriumSolution solve_equilibrium(const ModelParams& p) {
    return solve_equilibrium(p, TaxSchedule::zero());
}

}  // namespace mpru
