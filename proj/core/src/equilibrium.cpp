#include "mpru/equilibrium.hpp"

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "mpru/errors.hpp"
#include "mpru/primitives.hpp"
#include "mpru/projection.hpp"
#include "mpru/steady_state.hpp"

namespace mpru {

namespace {

// Internal: a primitive domain violation at one collocation point, caught by
// the block Newton line search.
struct PointDomain {
    std::string what;
};

constexpr double kContinuationFloor = 1e-6;

// Linear row representing a (possibly clamped-linear extrapolated) spline
// evaluation over the 16 active tensor coefficients.
struct BasisRow2D {
    double w[16];
    int firstK, firstD;
    int mD;  // coefficient stride (number of D-basis functions)
    Eigen::Index coeff_index(int a, int b) const {
        return static_cast<Eigen::Index>(firstK + a) * mD + (firstD + b);
    }
};

BasisRow2D value_row(const SplineBasis1D& bK, const SplineBasis1D& bD, double K, double dt) {
    BasisRow2D row;
    row.mD = bD.coeff_count();
    const double Kc = std::clamp(K, bK.lo(), bK.hi());
    const double dc = std::clamp(dt, bD.lo(), bD.hi());
    const double dxK = K - Kc, dxD = dt - dc;
    double dK[4][4], dD[4][4];
    bK.basis_all(Kc, 1, dK, row.firstK);
    bD.basis_all(dc, 1, dD, row.firstD);
    for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b)
            row.w[a * 4 + b] = dK[0][a] * dD[0][b] + dxK * dK[1][a] * dD[0][b] +
                               dxD * dK[0][a] * dD[1][b];
    return row;
}

struct FieldEval {
    double v, gK, gD;
};

FieldEval eval_field(const SplineField& f, int slice, double K, double dt, bool* extrap) {
    FieldEval e;
    const double x[2] = {K, dt};
    double grad[2];
    f.eval_all(slice, std::span<const double>(x, 2), e.v, grad, nullptr, extrap);
    e.gK = grad[0];
    e.gD = grad[1];
    return e;
}

}  // namespace

CEGrid CEGrid::make(const ModelParams& p) {
    const SteadyState ss = deterministic_steady_state(p, 0.0);
    CEGrid g;
    g.K_knots.setLinSpaced(p.ce_n_K, p.K_lo_frac * ss.K, p.K_hi_frac * ss.K);
    g.dtil_knots.setLinSpaced(p.ce_n_D, p.ce_dtil_lo, p.ce_dtil_hi);
    return g;
}

CEGrid CEGrid::make_ramsey_base(const ModelParams& p) {
    const SteadyState ss = deterministic_steady_state(p, 0.0);
    CEGrid g;
    g.K_knots.setLinSpaced(p.ram_n_K, p.K_lo_frac * ss.K, p.K_hi_frac * ss.K);
    g.dtil_knots.setLinSpaced(p.ram_n_D, p.ce_dtil_lo, p.ram_dtil_hi);
    return g;
}

PolicyFieldValues PolicyFieldValues::zeros(int slices, int points) {
    PolicyFieldValues v;
    for (auto* f : {&v.C_w, &v.C_e, &v.L, &v.D_next}) {
        f->assign(slices, Eigen::VectorXd::Zero(points));
    }
    return v;
}

double PolicyFieldValues::sup_distance(const PolicyFieldValues& o) const {
    double d = 0.0;
    for (size_t s = 0; s < C_w.size(); ++s) {
        d = std::max(d, (C_w[s] - o.C_w[s]).cwiseAbs().maxCoeff());
        d = std::max(d, (C_e[s] - o.C_e[s]).cwiseAbs().maxCoeff());
        d = std::max(d, (L[s] - o.L[s]).cwiseAbs().maxCoeff());
        d = std::max(d, (D_next[s] - o.D_next[s]).cwiseAbs().maxCoeff());
    }
    return d;
}

void PolicyFieldValues::mix_from(const PolicyFieldValues& next, double w) {
    for (size_t s = 0; s < C_w.size(); ++s) {
        C_w[s] = (1.0 - w) * C_w[s] + w * next.C_w[s];
        C_e[s] = (1.0 - w) * C_e[s] + w * next.C_e[s];
        L[s] = (1.0 - w) * L[s] + w * next.L[s];
        D_next[s] = (1.0 - w) * D_next[s] + w * next.D_next[s];
    }
}

double ResidualReport::worst() const {
    double w = 0.0;
    for (double m : max_abs) w = std::max(w, m);
    return w;
}

std::string ResidualReport::summary() const {
    static const char* names[8] = {"labor",    "worker_euler", "expert_euler", "arbitrage",
                                   "cap_price", "resource",     "cap_lom",      "worker_budget"};
    std::ostringstream os;
    os.precision(3);
    os << std::scientific;
    for (int i = 0; i < 8; ++i)
        os << names[i] << " max " << max_abs[i] << " mean " << mean_abs[i] << "\n";
    os << "points " << points << " extrapolated " << extrapolated_points << "\n";
    return os.str();
}

CESolver::CESolver(const ModelParams& p, const TaxSchedule& taxes, const CEGrid& grid,
                   const ShockChain& chain)
    : params_(p), taxes_(taxes), grid_(grid), chain_(chain) {
    D_scale_ = std::max(1.0, grid_.dtil_knots.maxCoeff() * grid_.K_knots.maxCoeff());
    wK_ = 0.012 * (grid_.K_knots[grid_.n_K() - 1] - grid_.K_knots[0]);
    wD_ = 0.012 * (grid_.dtil_knots[grid_.n_dtil() - 1] - grid_.dtil_knots[0]);
}

ContinuationFields CESolver::fit_fields(const PolicyFieldValues& v) const {
    const std::vector<Eigen::VectorXd> axes = {grid_.K_knots, grid_.dtil_knots};
    const int S = chain_.n();
    ContinuationFields f;
    f.C_w = SplineField::fit(axes, S, v.C_w);
    f.C_e = SplineField::fit(axes, S, v.C_e);
    f.L = SplineField::fit(axes, S, v.L);
    f.D_next = SplineField::fit(axes, S, v.D_next);
    return f;
}

CEPointEval CESolver::eval_point(int slice, int point, double cw, double ce, double l,
                                 double Dbar, const ContinuationFields& cont, int level) const {
    const ModelParams& p = params_;
    const double K = grid_.K(point);
    const double dtil = grid_.dtil(point);
    const double D = dtil * K;

    if (!(cw > 0.0) || !(ce > 0.0) || !(l > 0.0))
        throw PointDomain{"nonpositive unknowns"};
    if (cw > 20.0 || ce > 20.0 || l > 2.0)
        throw PointDomain{"unknowns outside plausible range"};

    CEPointEval ev;
    ev.cw = cw;
    ev.ce = ce;
    ev.l = l;

    const double g = p.gamma;
    ev.uwc = std::pow(cw, -g);
    ev.uwl = -p.psi * std::pow(l, p.nu);
    ev.uec = std::pow(ce, -g);
    const double uw_cc = -g * std::pow(cw, -g - 1.0);
    const double uw_ll = -p.psi * p.nu * std::pow(l, p.nu - 1.0);
    const double ue_cc = -g * std::pow(ce, -g - 1.0);

    const double zv = chain_.z_values[slice];
    ev.Y = std::exp(zv) * std::pow(K, p.alpha) * std::pow(l, 1.0 - p.alpha);
    ev.W = (1.0 - p.alpha) * ev.Y / l;
    ev.Rr = p.alpha * ev.Y / K;
    ev.I = ev.Y - cw - ce;
    ev.x = ev.I / K;
    const double base = p.A_cap * (ev.x - p.delta) + 1.0;
    if (!(base > 0.0)) throw PointDomain{"investment outside capital-production domain"};
    const double phi = (std::pow(base, p.xi) - 1.0) / (p.A_cap * p.xi) + p.delta;
    const double phip = std::pow(base, p.xi - 1.0);
    const double phis = (p.xi - 1.0) * p.A_cap * std::pow(base, p.xi - 2.0);
    ev.q = 1.0 / phip;
    ev.Pi = ev.q * phi - ev.x;
    ev.Khat = K * (phi + 1.0 - p.delta);

    const AggregateState S{K, D, slice};
    ev.tau_l = taxes_.tau_l(S, ev.q);
    ev.tau_d = taxes_.tau_d(S, ev.q);
    ev.tau_k = taxes_.tau_k(S, ev.q);
    if (!(ev.tau_d < 1.0)) throw PointDomain{"tau_d >= 1"};
    if (!(ev.tau_k > -1.0)) throw PointDomain{"tau_k <= -1"};

    // Expectations over the shock-chain row. Successor capital carries the
    // quality shock; the deposit choice Dbar is measurable (common across
    // successors).
    const int n = chain_.n();
    double Ew = 0.0, Ee = 0.0, Epay = 0.0;
    double EwK = 0.0, EeK = 0.0, EpayK = 0.0;  // d/dKhat
    double EwD = 0.0, EeD = 0.0, EpayD = 0.0;  // d/dDbar
    bool extrap = false;
    if (level >= 2) ev.succ.resize(n);

    const double dtil_lo = grid_.dtil_knots[0];
    const double dtil_hi = grid_.dtil_knots[grid_.n_dtil() - 1];
    const double K_lo = grid_.K_knots[0];
    const double K_hi = grid_.K_knots[grid_.n_K() - 1];
    for (int zp = 0; zp < n; ++zp) {
        const double prob = chain_.P(slice, zp);
        if (prob <= 0.0) {
            if (level >= 2) ev.succ[zp] = CEPointEval::SuccessorPartials{};
            continue;
        }
        const double zeta = chain_.zeta_values[zp];
        // The grid box is the operative state space: successor states are
        // smoothly projected onto it so the edges cannot feed back through
        // unanchored extrapolation of the continuation fields.
        const SmoothProj pk = smooth_box(zeta * ev.Khat, K_lo, K_hi, wK_);
        const double Kp = pk.v;
        const SmoothProj pd = smooth_box(Dbar / Kp, dtil_lo, dtil_hi, wD_);
        const double dtp = pd.v;

        bool e1 = false, e2 = false, e3 = false;
        FieldEval fcw = eval_field(cont.C_w, zp, Kp, dtp, &e1);
        FieldEval fce = eval_field(cont.C_e, zp, Kp, dtp, &e2);
        FieldEval fl = eval_field(cont.L, zp, Kp, dtp, &e3);
        extrap = extrap || e1 || e2 || e3;
        if (fcw.v < kContinuationFloor) { fcw.v = kContinuationFloor; fcw.gK = fcw.gD = 0.0; }
        if (fce.v < kContinuationFloor) { fce.v = kContinuationFloor; fce.gK = fce.gD = 0.0; }
        if (fl.v < kContinuationFloor) { fl.v = kContinuationFloor; fl.gK = fl.gD = 0.0; }

        const double cwp = fcw.v, cep = fce.v, lp = fl.v;
        const double Yp = std::exp(chain_.z_values[zp]) * std::pow(Kp, p.alpha) *
                          std::pow(lp, 1.0 - p.alpha);
        const double Wp = (1.0 - p.alpha) * Yp / lp;
        const double Rp = p.alpha * Yp / Kp;
        const double Ip = Yp - cwp - cep;
        const double xp = Ip / Kp;
        const double basep = p.A_cap * (xp - p.delta) + 1.0;
        if (!(basep > 0.0)) throw PointDomain{"successor investment outside domain"};
        const double phi_p = (std::pow(basep, p.xi) - 1.0) / (p.A_cap * p.xi) + p.delta;
        const double phip_p = std::pow(basep, p.xi - 1.0);
        const double phis_p = (p.xi - 1.0) * p.A_cap * std::pow(basep, p.xi - 2.0);
        const double qp = 1.0 / phip_p;
        const double Pip = qp * phi_p - xp;
        const double payoff = zeta * (Rp + (1.0 - p.delta) * qp + Pip);
        const double uwcp = std::pow(cwp, -g);
        const double uecp = std::pow(cep, -g);

        Ew += prob * uwcp;
        Ee += prob * uecp;
        Epay += prob * uecp * payoff;

        if (level >= 1) {
            // Total derivatives of the successor objects with respect to Khat
            // (successor point moves in K and in D/K) and Dbar.
            const double dKp_dKh = zeta * pk.dv;
            const double ddt_dKh = pd.dv * (-(Dbar / Kp) * dKp_dKh / Kp);
            const double ddt_dDp = pd.dv / Kp;
            const double dcw_dKh = fcw.gK * dKp_dKh + fcw.gD * ddt_dKh;
            const double dce_dKh = fce.gK * dKp_dKh + fce.gD * ddt_dKh;
            const double dl_dKh = fl.gK * dKp_dKh + fl.gD * ddt_dKh;
            const double dcw_dDp = fcw.gD * ddt_dDp;
            const double dce_dDp = fce.gD * ddt_dDp;
            const double dl_dDp = fl.gD * ddt_dDp;

            auto pay_total = [&](double dKp, double dcw, double dce, double dl) {
                const double dY = Rp * dKp + Wp * dl;
                const double dI = dY - dcw - dce;
                const double dx = (dI * Kp - Ip * dKp) / (Kp * Kp);
                const double dq = -(phis_p / (phip_p * phip_p)) * dx;
                const double dR = p.alpha * (dY * Kp - Yp * dKp) / (Kp * Kp);
                const double dPi = dq * phi_p;  // q' Phi'(x') = 1
                return zeta * (dR + (1.0 - p.delta) * dq + dPi);
            };
            const double dpay_dKh = pay_total(dKp_dKh, dcw_dKh, dce_dKh, dl_dKh);
            const double dpay_dDp = pay_total(0.0, dcw_dDp, dce_dDp, dl_dDp);
            const double duwc_dKh = -g * std::pow(cwp, -g - 1.0) * dcw_dKh;
            const double duec_dKh = -g * std::pow(cep, -g - 1.0) * dce_dKh;
            const double duwc_dDp = -g * std::pow(cwp, -g - 1.0) * dcw_dDp;
            const double duec_dDp = -g * std::pow(cep, -g - 1.0) * dce_dDp;

            EwK += prob * duwc_dKh;
            EeK += prob * duec_dKh;
            EpayK += prob * (duec_dKh * payoff + uecp * dpay_dKh);
            EwD += prob * duwc_dDp;
            EeD += prob * duec_dDp;
            EpayD += prob * (duec_dDp * payoff + uecp * dpay_dDp);

            if (level >= 2) {
                auto& sp = ev.succ[zp];
                sp.Kp = Kp;
                sp.dtp = dtp;
                const double duwc_dcwp = -g * std::pow(cwp, -g - 1.0);
                const double duec_dcep = -g * std::pow(cep, -g - 1.0);
                const double dpay_dcwp = pay_total(0.0, 1.0, 0.0, 0.0);
                const double dpay_dcep = pay_total(0.0, 0.0, 1.0, 0.0);
                const double dpay_dlp = pay_total(0.0, 0.0, 0.0, 1.0);
                // Filled below once expectations are complete; stash raw
                // pieces in dres_de temporarily.
                sp.dres_de[0] = {prob * duwc_dcwp, prob * duec_dcep, 0.0};
                sp.dres_de[1] = {prob * uecp * dpay_dcwp,
                                 prob * (duec_dcep * payoff + uecp * dpay_dcep),
                                 prob * uecp * dpay_dlp};
                sp.dres_de[2] = {0.0, 0.0, 0.0};
            }
        }
    }
    if (!(Ew > 0.0) || !(Ee > 0.0) || !(Epay > 0.0))
        throw PointDomain{"nonpositive marginal-utility expectation"};

    ev.extrapolated = extrap;
    ev.Ew = Ew;
    ev.Ee = Ee;
    ev.Epay = Epay;
    ev.r = ev.uwc / (p.beta * Ew);
    if (!(ev.r > 0.2 && ev.r < 5.0)) throw PointDomain{"riskless rate outside plausible range"};
    ev.sav = D + (1.0 - ev.tau_l) * ev.W * l - cw;
    ev.Dnext_budget = ev.r * ev.sav;

    const double T1 = ev.uwc * Ee / (ev.uec * Ew);
    const double U = p.beta * Epay / (ev.q * ev.uec);
    ev.res[0] = (1.0 - ev.tau_l) + ev.uwl / (ev.uwc * ev.W);
    ev.res[1] = (1.0 - ev.tau_d) - T1;
    ev.res[2] = (1.0 + ev.tau_k) - U;
    ev.B = (Dbar - ev.Dnext_budget) / D_scale_;

    if (level >= 1) {
        const double duwc[3] = {uw_cc, 0.0, 0.0};
        const double duec[3] = {0.0, ue_cc, 0.0};
        const double duwl[3] = {0.0, 0.0, uw_ll};
        const double dW[3] = {0.0, 0.0, -p.alpha * ev.W / l};
        const double dI[3] = {-1.0, -1.0, ev.W};
        double dq[3], dKhat[3], dEw[3], dEe[3], dEpay[3], dtl[3], dtd[3], dtk[3];
        const double tl_dq = taxes_.tau_l_dq(S, ev.q);
        const double td_dq = taxes_.tau_d_dq(S, ev.q);
        const double tk_dq = taxes_.tau_k_dq(S, ev.q);
        for (int u = 0; u < 3; ++u) {
            const double dx = dI[u] / K;
            dq[u] = -(phis / (phip * phip)) * dx;
            dKhat[u] = phip * dI[u];
            dEw[u] = EwK * dKhat[u];
            dEe[u] = EeK * dKhat[u];
            dEpay[u] = EpayK * dKhat[u];
            dtl[u] = tl_dq * dq[u];
            dtd[u] = td_dq * dq[u];
            dtk[u] = tk_dq * dq[u];
        }
        for (int u = 0; u < 3; ++u) {
            const double uwcW = ev.uwc * ev.W;
            ev.dres[0][u] = -dtl[u] + (duwl[u] * uwcW -
                                       ev.uwl * (duwc[u] * ev.W + ev.uwc * dW[u])) /
                                          (uwcW * uwcW);
            ev.dres[1][u] = -dtd[u] - T1 * (duwc[u] / ev.uwc + dEe[u] / Ee -
                                            duec[u] / ev.uec - dEw[u] / Ew);
            ev.dres[2][u] = dtk[u] - U * (dEpay[u] / Epay - dq[u] / ev.q - duec[u] / ev.uec);
        }
        ev.dres_dDp[0] = 0.0;
        ev.dres_dDp[1] = -T1 * (EeD / Ee - EwD / Ew);
        ev.dres_dDp[2] = -U * (EpayD / Epay);

        double dr[3], dsav[3];
        for (int u = 0; u < 3; ++u) {
            dr[u] = ev.r * (duwc[u] / ev.uwc - dEw[u] / Ew);
            dsav[u] = -dtl[u] * ev.W * l + (1.0 - ev.tau_l) * (dW[u] * l + ev.W * (u == 2 ? 1.0 : 0.0)) -
                      (u == 0 ? 1.0 : 0.0);
            ev.dB[u] = (-dr[u] * ev.sav - ev.r * dsav[u]) / D_scale_;
        }
        const double dr_dDp = -ev.r * EwD / Ew;
        ev.dB_dDp = (1.0 - dr_dDp * ev.sav) / D_scale_;

        if (level >= 2) {
            for (int zp = 0; zp < n; ++zp) {
                if (chain_.P(slice, zp) <= 0.0) continue;
                auto& sp = ev.succ[zp];
                const double dEw_dcwp = sp.dres_de[0][0];
                const double dEe_dcep = sp.dres_de[0][1];
                const double dEpay_dcwp = sp.dres_de[1][0];
                const double dEpay_dcep = sp.dres_de[1][1];
                const double dEpay_dlp = sp.dres_de[1][2];
                sp.dres_de[0] = {0.0, 0.0, 0.0};  // labor residual: no successor deps
                sp.dres_de[1] = {T1 * dEw_dcwp / Ew, -T1 * dEe_dcep / Ee, 0.0};
                sp.dres_de[2] = {-U * dEpay_dcwp / Epay, -U * dEpay_dcep / Epay,
                                 -U * dEpay_dlp / Epay};
                sp.dB_de = {ev.r * (dEw_dcwp / Ew) * ev.sav / D_scale_, 0.0, 0.0};
            }
        }
    }
    return ev;
}


void CESolver::solve_block(int slice, int point, const ContinuationFields& cont, double Dbar,
                           double& cw, double& ce, double& l, double& Dnext_out,
                           double* residual_at_guess) const {
    auto point_tag = [&]() {
        std::ostringstream os;
        os << "slice " << slice << " point (K=" << grid_.K(point) << ", D/K=" << grid_.dtil(point)
           << ")";
        return os.str();
    };

    // Joint unknowns: log consumptions and labor plus the deposit choice.
    // The deposit choice is solved inside the block because its feedback
    // through the worker Euler rate is too stiff to lag across sweeps.
    Eigen::Vector4d y(std::log(cw), std::log(ce), std::log(l), Dbar);
    // Trust box around the incoming guess: one sweep may move a point only
    // this far, which keeps far-from-converged sweeps from amplifying corner
    // swings. Inactive near a fixed point.
    const Eigen::Vector4d y_init = y;
    const Eigen::Vector4d tr_cap(0.35, 0.35, 0.35, 0.08 * D_scale_);
    auto project = [&](Eigen::Vector4d yt) {
        for (int u = 0; u < 4; ++u)
            yt[u] = std::clamp(yt[u], y_init[u] - tr_cap[u], y_init[u] + tr_cap[u]);
        return yt;
    };
    auto at_boundary = [&](const Eigen::Vector4d& yy) {
        for (int u = 0; u < 4; ++u)
            if (std::abs(yy[u] - y_init[u]) >= tr_cap[u] * (1.0 - 1e-12)) return true;
        return false;
    };
    auto sup = [](const CEPointEval& e) {
        return std::max({std::abs(e.res[0]), std::abs(e.res[1]), std::abs(e.res[2]),
                         std::abs(e.B)});
    };
    auto merit = [](const CEPointEval& e) {
        return e.res[0] * e.res[0] + e.res[1] * e.res[1] + e.res[2] * e.res[2] + e.B * e.B;
    };
    const double Dcap = 2.0 * grid_.dtil_knots.maxCoeff() * grid_.K_knots.maxCoeff() + 1.0;

    CEPointEval ev{};
    try {
        ev = eval_point(slice, point, std::exp(y[0]), std::exp(y[1]), std::exp(y[2]), y[3], cont, 1);
    } catch (const PointDomain& e) {
        throw SolverError("time iteration: infeasible guess at " + point_tag() + ": " + e.what);
    }
    if (residual_at_guess) *residual_at_guess = sup(ev);

    for (int it = 0; it < params_.block_max_iter; ++it) {
        if (sup(ev) < params_.block_tol) break;
        const double m0 = merit(ev);

        Eigen::Matrix4d J;
        for (int k = 0; k < 3; ++k) {
            for (int u = 0; u < 3; ++u) J(k, u) = ev.dres[k][u] * std::exp(y[u]);
            J(k, 3) = ev.dres_dDp[k];
        }
        for (int u = 0; u < 3; ++u) J(3, u) = ev.dB[u] * std::exp(y[u]);
        J(3, 3) = ev.dB_dDp;
        const Eigen::Vector4d R(ev.res[0], ev.res[1], ev.res[2], ev.B);
        Eigen::Vector4d step = J.fullPivLu().solve(-R);
        const double maxlog = step.head<3>().cwiseAbs().maxCoeff();
        if (maxlog > 2.0) step *= 2.0 / maxlog;
        if (std::abs(step[3]) > 0.25 * Dcap) step *= 0.25 * Dcap / std::abs(step[3]);

        double alpha = 1.0;
        bool accepted = false;
        while (alpha > 1e-8) {
            Eigen::Vector4d yt = project(y + alpha * step);
            yt[3] = std::clamp(yt[3], -Dcap, Dcap);
            if ((yt - y).cwiseAbs().maxCoeff() == 0.0) break;
            try {
                CEPointEval evt = eval_point(slice, point, std::exp(yt[0]), std::exp(yt[1]),
                                             std::exp(yt[2]), yt[3], cont, 1);
                if (merit(evt) < m0 * (1.0 - 1e-4 * alpha) || sup(evt) < params_.block_tol) {
                    y = yt;
                    ev = evt;
                    accepted = true;
                    break;
                }
            } catch (const PointDomain&) {
                // shrink into the feasible region
            }
            alpha *= 0.5;
        }
        if (!accepted) {
            if (sup(ev) < 100.0 * params_.block_tol) break;  // rounding floor
            if (at_boundary(y)) break;  // capped partial step this sweep
            throw SolverError("time iteration: block stalled at " + point_tag() +
                              ", residual " + std::to_string(sup(ev)));
        }
        if (it + 1 == params_.block_max_iter && sup(ev) >= params_.block_tol &&
            !at_boundary(y))
            throw SolverError("time iteration: block did not converge at " + point_tag() +
                              ", residual " + std::to_string(sup(ev)));
    }
    cw = std::exp(y[0]);
    ce = std::exp(y[1]);
    l = std::exp(y[2]);
    Dnext_out = y[3];
}

PolicyFieldValues CESolver::time_iteration_step(const PolicyFieldValues& c1,
                                                double* residual_sup) const {
    const ContinuationFields cont = fit_fields(c1);
    const int S = chain_.n();
    const int n_pts = grid_.points();
    PolicyFieldValues c0 = PolicyFieldValues::zeros(S, n_pts);

    double sup = 0.0;
    std::string error_msg;
#pragma omp parallel for collapse(2) schedule(dynamic, 8) reduction(max : sup)
    for (int s = 0; s < S; ++s) {
        for (int i = 0; i < n_pts; ++i) {
            double cw = c1.C_w[s][i], ce = c1.C_e[s][i], l = c1.L[s][i], dn = 0.0;
            double rg = 0.0;
            try {
                solve_block(s, i, cont, c1.D_next[s][i], cw, ce, l, dn, &rg);
            } catch (const SolverError& e) {
#pragma omp critical
                error_msg = e.what();
            }
            c0.C_w[s][i] = cw;
            c0.C_e[s][i] = ce;
            c0.L[s][i] = l;
            c0.D_next[s][i] = dn;
            sup = std::max(sup, rg);
        }
    }
    if (!error_msg.empty()) throw SolverError(error_msg);
    if (residual_sup) *residual_sup = sup;
    return c0;
}

double CESolver::residual_sup_norm(const PolicyFieldValues& v) const {
    const ContinuationFields cont = fit_fields(v);
    const int S = chain_.n();
    const int n_pts = grid_.points();
    double sup = 0.0;
    for (int s = 0; s < S; ++s)
        for (int i = 0; i < n_pts; ++i) {
            CEPointEval ev;
            try {
                ev = eval_point(s, i, v.C_w[s][i], v.C_e[s][i], v.L[s][i], v.D_next[s][i], cont, 0);
            } catch (const PointDomain&) {
                return std::numeric_limits<double>::infinity();
            }
            sup = std::max({sup, std::abs(ev.res[0]), std::abs(ev.res[1]), std::abs(ev.res[2]),
                            std::abs(ev.B)});
        }
    return sup;
}

PolicyFieldValues CESolver::initial_guess() const {
    const int S = chain_.n();
    const int n_pts = grid_.points();
    PolicyFieldValues v = PolicyFieldValues::zeros(S, n_pts);
    const ModelParams& p = params_;
    for (int s = 0; s < S; ++s) {
        const double zv = chain_.z_values[s];
        for (int i = 0; i < n_pts; ++i) {
            const double K = grid_.K(i);
            const double D = grid_.dtil(i) * K;
            double L = 0.8, C_w = 1.0, Y = 1.0, W = 1.0;
            for (int it = 0; it < 40; ++it) {
                Y = std::exp(zv) * std::pow(K, p.alpha) * std::pow(L, 1.0 - p.alpha);
                W = (1.0 - p.alpha) * Y / L;
                C_w = (1.0 - p.beta) * D + W * L;
                const double Lnew = std::pow(W / (p.psi * std::pow(C_w, p.gamma)), 1.0 / p.nu);
                L = 0.5 * L + 0.5 * std::min(Lnew, 10.0);
            }
            const double I = p.delta * K;
            double C_e = Y - I - C_w;
            if (C_e < 0.05 * Y) {
                C_e = 0.05 * Y;
                C_w = Y - I - C_e;
            }
            v.C_w[s][i] = C_w;
            v.C_e[s][i] = C_e;
            v.L[s][i] = L;
            v.D_next[s][i] = D;
        }
    }
    return v;
}

// ---------------------------------------------------------------------------
// Stacked Newton polish
// ---------------------------------------------------------------------------

namespace {
struct StackLayout {
    int S, n_pts, mK, mD, m, nK, nD;
    Eigen::Index n_nl, n_cl_per, n_rows;
    Eigen::Index coeff_offset(int field, int slice) const {
        return (static_cast<Eigen::Index>(field) * S + slice) * m;
    }
    Eigen::Index nl_row(int slice, int point, int k) const {
        return (static_cast<Eigen::Index>(slice) * n_pts + point) * 4 + k;
    }
};

StackLayout make_layout(const CEGrid& grid, int S) {
    StackLayout lay;
    lay.S = S;
    lay.n_pts = grid.points();
    lay.nK = grid.n_K();
    lay.nD = grid.n_dtil();
    lay.mK = lay.nK + 2;
    lay.mD = lay.nD + 2;
    lay.m = lay.mK * lay.mD;
    lay.n_nl = static_cast<Eigen::Index>(4) * S * lay.n_pts;
    lay.n_cl_per = lay.m - lay.nK * lay.nD;
    lay.n_rows = lay.n_nl + 4 * static_cast<Eigen::Index>(S) * lay.n_cl_per;
    return lay;
}
}  // namespace

Eigen::VectorXd CESolver::pack_coefficients(const ContinuationFields& cf) const {
    const StackLayout lay = make_layout(grid_, chain_.n());
    Eigen::VectorXd u(lay.n_rows);
    const SplineField* src[4] = {&cf.C_w, &cf.C_e, &cf.L, &cf.D_next};
    for (int fi = 0; fi < 4; ++fi)
        for (int s = 0; s < lay.S; ++s)
            u.segment(lay.coeff_offset(fi, s), lay.m) = src[fi]->coeffs(s);
    return u;
}

void CESolver::unpack_coefficients(const Eigen::VectorXd& u, ContinuationFields& cf) const {
    const StackLayout lay = make_layout(grid_, chain_.n());
    SplineField* dst[4] = {&cf.C_w, &cf.C_e, &cf.L, &cf.D_next};
    for (int fi = 0; fi < 4; ++fi)
        for (int s = 0; s < lay.S; ++s)
            dst[fi]->coeffs(s) = u.segment(lay.coeff_offset(fi, s), lay.m);
}

bool CESolver::assemble_stacked(const ContinuationFields& cf, Eigen::VectorXd& G,
                                Eigen::SparseMatrix<double>* J) const {
    const int S = chain_.n();
    const StackLayout lay = make_layout(grid_, S);
    const SplineBasis1D& bK = cf.C_w.basis(0);
    const SplineBasis1D& bD = cf.C_w.basis(1);
    const Eigen::MatrixXd& AK = bK.fit_matrix();
    const Eigen::MatrixXd& AD = bD.fit_matrix();

    std::vector<std::pair<int, int>> closure;
    closure.reserve(lay.n_cl_per);
    for (int a = 0; a < lay.mK; ++a)
        for (int b = 0; b < lay.mD; ++b)
            if (a >= lay.nK || b >= lay.nD) closure.emplace_back(a, b);

    G.resize(lay.n_rows);
    std::vector<Eigen::Triplet<double>> trip;
    if (J) trip.reserve(static_cast<size_t>(lay.n_nl) * 220);

    // Field values at the collocation knots from the current coefficients.
    PolicyFieldValues v = PolicyFieldValues::zeros(S, lay.n_pts);
    for (int s = 0; s < S; ++s)
        for (int i = 0; i < lay.n_pts; ++i) {
            const double x[2] = {grid_.K(i), grid_.dtil(i)};
            std::span<const double> xs(x, 2);
            v.C_w[s][i] = cf.C_w.eval(s, xs);
            v.C_e[s][i] = cf.C_e.eval(s, xs);
            v.L[s][i] = cf.L.eval(s, xs);
            v.D_next[s][i] = cf.D_next.eval(s, xs);
        }

    for (int s = 0; s < S; ++s) {
        for (int i = 0; i < lay.n_pts; ++i) {
            CEPointEval ev;
            try {
                ev = eval_point(s, i, v.C_w[s][i], v.C_e[s][i], v.L[s][i], v.D_next[s][i], cf,
                                J ? 2 : 0);
            } catch (const PointDomain&) {
                return false;
            }
            for (int k = 0; k < 3; ++k) G[lay.nl_row(s, i, k)] = ev.res[k];
            G[lay.nl_row(s, i, 3)] = ev.B;
            if (!J) continue;

            const BasisRow2D local = value_row(bK, bD, grid_.K(i), grid_.dtil(i));
            for (int k = 0; k < 4; ++k) {
                const Eigen::Index row = lay.nl_row(s, i, k);
                double fac[4];
                if (k < 3) {
                    fac[0] = ev.dres[k][0];
                    fac[1] = ev.dres[k][1];
                    fac[2] = ev.dres[k][2];
                    fac[3] = ev.dres_dDp[k];
                } else {
                    fac[0] = ev.dB[0];
                    fac[1] = ev.dB[1];
                    fac[2] = ev.dB[2];
                    fac[3] = ev.dB_dDp;
                }
                for (int fi = 0; fi < 4; ++fi) {
                    if (fac[fi] == 0.0) continue;
                    const Eigen::Index off = lay.coeff_offset(fi, s);
                    for (int a = 0; a < 4; ++a)
                        for (int b = 0; b < 4; ++b) {
                            const double w = local.w[a * 4 + b];
                            if (w != 0.0)
                                trip.emplace_back(row, off + local.coeff_index(a, b), fac[fi] * w);
                        }
                }
            }
            for (int zp = 0; zp < S; ++zp) {
                if (chain_.P(s, zp) <= 0.0) continue;
                const auto& sp = ev.succ[zp];
                const BasisRow2D srow = value_row(bK, bD, sp.Kp, sp.dtp);
                for (int k = 0; k < 4; ++k) {
                    const Eigen::Index row = lay.nl_row(s, i, k);
                    for (int fp = 0; fp < 3; ++fp) {
                        const double fac = (k < 3) ? sp.dres_de[k][fp] : sp.dB_de[fp];
                        if (fac == 0.0) continue;
                        const Eigen::Index off = lay.coeff_offset(fp, zp);
                        for (int a = 0; a < 4; ++a)
                            for (int b = 0; b < 4; ++b) {
                                const double w = srow.w[a * 4 + b];
                                if (w != 0.0)
                                    trip.emplace_back(row, off + srow.coeff_index(a, b), fac * w);
                            }
                    }
                }
            }
        }
    }

    // Closure rows: linear not-a-knot consistency conditions per field/slice.
    const SplineField* src[4] = {&cf.C_w, &cf.C_e, &cf.L, &cf.D_next};
    Eigen::Index row = lay.n_nl;
    for (int fi = 0; fi < 4; ++fi)
        for (int s = 0; s < S; ++s) {
            const Eigen::VectorXd& c = src[fi]->coeffs(s);
            const Eigen::Index off = lay.coeff_offset(fi, s);
            for (const auto& [a, b] : closure) {
                double acc = 0.0;
                for (int ik = 0; ik < lay.mK; ++ik) {
                    const double wa = AK(a, ik);
                    if (wa == 0.0) continue;
                    for (int jd = 0; jd < lay.mD; ++jd) {
                        const double wb = AD(b, jd);
                        if (wb == 0.0) continue;
                        acc += wa * wb * c[ik * lay.mD + jd];
                        if (J) trip.emplace_back(row, off + ik * lay.mD + jd, wa * wb);
                    }
                }
                G[row++] = acc;
            }
        }

    if (J) {
        J->resize(lay.n_rows, lay.n_rows);
        J->setFromTriplets(trip.begin(), trip.end());
    }
    return true;
}

PolicyFieldValues CESolver::newton_polish(const PolicyFieldValues& c_init) const {
    const int S = chain_.n();
    const StackLayout lay = make_layout(grid_, S);
    ContinuationFields f = fit_fields(c_init);

    auto values_at_knots = [&](const ContinuationFields& cf) {
        PolicyFieldValues v = PolicyFieldValues::zeros(S, lay.n_pts);
        for (int s = 0; s < S; ++s)
            for (int i = 0; i < lay.n_pts; ++i) {
                const double x[2] = {grid_.K(i), grid_.dtil(i)};
                std::span<const double> xs(x, 2);
                v.C_w[s][i] = cf.C_w.eval(s, xs);
                v.C_e[s][i] = cf.C_e.eval(s, xs);
                v.L[s][i] = cf.L.eval(s, xs);
                v.D_next[s][i] = cf.D_next.eval(s, xs);
            }
        return v;
    };

    // Powell dogleg trust region on the stacked square system. The Newton
    // direction can be near-singular far from the solution; the Cauchy
    // component guarantees progress, and the factorization is reused across
    // radius shrinks.
    Eigen::VectorXd G;
    if (!assemble_stacked(f, G, nullptr))
        throw SolverError("newton_polish: infeasible starting point");
    double norm = G.cwiseAbs().maxCoeff();
    double radius = 1.0;
    const double radius_max = 100.0;

    for (int it = 0; it < params_.newton_max_iter && norm >= params_.newton_tol; ++it) {
        Eigen::SparseMatrix<double> J;
        if (!assemble_stacked(f, G, &J))
            throw SolverError("newton_polish: domain violation during assembly");
        Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
        lu.compute(J);
        if (lu.info() != Eigen::Success)
            throw SolverError("newton_polish: sparse factorization failed");
        const Eigen::VectorXd dN = lu.solve(-G);
        const Eigen::VectorXd grad = J.transpose() * G;  // gradient of 0.5|G|^2
        const Eigen::VectorXd Jg = J * grad;
        const double gnorm2 = grad.squaredNorm();
        const double tC = gnorm2 / std::max(Jg.squaredNorm(), 1e-300);
        const Eigen::VectorXd dC = -tC * grad;

        const Eigen::VectorXd u0 = pack_coefficients(f);
        const double m0 = 0.5 * G.squaredNorm();
        ContinuationFields trial = f;
        bool accepted = false;
        for (int shrink = 0; shrink < 40; ++shrink) {
            Eigen::VectorXd d;
            const double nN = dN.norm();
            if (nN <= radius) {
                d = dN;
            } else if (dC.norm() >= radius) {
                d = dC * (radius / dC.norm());
            } else {
                // dogleg segment from the Cauchy point toward Newton
                const Eigen::VectorXd w = dN - dC;
                const double a = w.squaredNorm();
                const double b = 2.0 * dC.dot(w);
                const double c = dC.squaredNorm() - radius * radius;
                const double t = (-b + std::sqrt(std::max(b * b - 4 * a * c, 0.0))) / (2 * a);
                d = dC + t * w;
            }
            Eigen::VectorXd Gt;
            bool feasible;
            {
                unpack_coefficients(u0 + d, trial);
                feasible = assemble_stacked(trial, Gt, nullptr);
            }
            const double pred = m0 - 0.5 * (G + J * d).squaredNorm();
            if (feasible && pred > 0.0) {
                const double mt = 0.5 * Gt.squaredNorm();
                const double rho = (m0 - mt) / pred;
                if (rho > 1e-4) {
                    f = trial;
                    G = Gt;
                    norm = G.cwiseAbs().maxCoeff();
                    if (rho > 0.75 && d.norm() > 0.8 * radius)
                        radius = std::min(2.0 * radius, radius_max);
                    else if (rho < 0.25)
                        radius = std::max(0.25 * d.norm(), 1e-10);
                    accepted = true;
                    break;
                }
            }
            radius *= 0.25;
            if (radius < 1e-12) break;
        }
        if (!accepted) {
            if (norm < 1e-8) break;  // rounding floor of the stacked residual
            throw SolverError("newton_polish: diverged, residual norm " + std::to_string(norm));
        }
    }
    if (norm >= 1e-8)
        throw SolverError("newton_polish: did not reach tolerance, residual norm " +
                          std::to_string(norm));
    return values_at_knots(f);
}

PolicyFieldValues CESolver::run_stage(PolicyFieldValues values, double target_resid) const {
    double resid = std::numeric_limits<double>::infinity();
    double omega = params_.ti_damping;
    double best_resid = std::numeric_limits<double>::infinity();
    PolicyFieldValues best = values;
    int polish_attempts = 0;
    int since_polish_fail = 0;
    for (int it = 0; it < params_.ti_max_iter; ++it) {
        double sup = 0.0;
        PolicyFieldValues next;
        bool step_failed = false;
        try {
            next = time_iteration_step(values, &sup);
            resid = sup;
        } catch (const SolverError&) {
            step_failed = true;
        }
        if (!step_failed && resid < best_resid) {
            best_resid = resid;
            best = values;
            if (omega < params_.ti_damping && it % 8 == 0) omega = std::min(params_.ti_damping, omega * 1.5);
        } else if (step_failed || resid > 1.5 * best_resid) {
            // Iteration is spiraling; restart from the best iterate with
            // stronger damping.
            if (omega <= 0.051 && step_failed)
                throw SolverError("time iteration unstable even under maximal damping");
            omega = std::max(0.05, omega * 0.5);
            values = best;
            if (step_failed) continue;
        }
        if (!step_failed && resid < params_.newton_basin && ++since_polish_fail > 0) {
            try {
                return newton_polish(values);
            } catch (const SolverError&) {
                if (++polish_attempts >= 3) throw;
                since_polish_fail = -40;  // give time iteration room before retrying
            }
        }
        const double delta = values.sup_distance(next);
        values.mix_from(next, omega);
        if (delta * omega < params_.ti_tol && resid < target_resid) return values;
    }
    throw SolverError("time iteration did not reach the Newton basin; residual " +
                      std::to_string(resid));
}

EquilibriumSolution CESolver::finish(const PolicyFieldValues& v) const {
    const int S = chain_.n();
    const int n_pts = grid_.points();
    const ContinuationFields cont = fit_fields(v);

    std::vector<Eigen::VectorXd> Iv(S), rv(S), qv(S), kv(S);
    for (int s = 0; s < S; ++s) {
        Iv[s].resize(n_pts);
        rv[s].resize(n_pts);
        qv[s].resize(n_pts);
        kv[s].resize(n_pts);
        for (int i = 0; i < n_pts; ++i) {
            CEPointEval ev;
            try {
                ev = eval_point(s, i, v.C_w[s][i], v.C_e[s][i], v.L[s][i], v.D_next[s][i], cont, 0);
            } catch (const PointDomain& e) {
                throw SolverError("finish: infeasible converged point: " + e.what);
            }
            Iv[s][i] = ev.I;
            rv[s][i] = ev.r;
            qv[s][i] = ev.q;
            kv[s][i] = ev.Khat;
        }
    }

    EquilibriumSolution sol;
    sol.params = params_;
    sol.shock_chain = chain_;
    sol.taxes = taxes_;
    sol.grid = grid_;
    const std::vector<Eigen::VectorXd> axes = {grid_.K_knots, grid_.dtil_knots};
    sol.C_w = cont.C_w;
    sol.C_e = cont.C_e;
    sol.L = cont.L;
    sol.D_next = cont.D_next;
    sol.I = SplineField::fit(axes, S, Iv);
    sol.r = SplineField::fit(axes, S, rv);
    sol.q = SplineField::fit(axes, S, qv);
    sol.K_next = SplineField::fit(axes, S, kv);
    sol.residual_report = sol.certify();
    return sol;
}

EquilibriumSolution solve_equilibrium(const ModelParams& p, const TaxSchedule& taxes) {
    p.validate();
    const CEGrid grid = CEGrid::make(p);

    const int N = p.ce_homotopy_stages;
    const double sigma0 = std::min(1e-6, p.sigma_eps);
    PolicyFieldValues values;
    bool have_values = false;

    for (int j = 0; j <= N; ++j) {
        ModelParams pj = p;
        const double t = static_cast<double>(j) / N;
        if (j < N) {
            pj.sigma_eps = sigma0 + (p.sigma_eps - sigma0) * t;
            pj.gamma = std::pow(p.gamma, t);
            pj.xi = std::pow(p.xi, t);
        }
        const ShockChain chain = make_shock_chain(pj);
        CESolver solver(pj, taxes, grid, chain);
        if (!have_values) {
            values = solver.initial_guess();
            have_values = true;
        }
        try {
            values = solver.run_stage(std::move(values), p.newton_tol * 10.0);
        } catch (const SolverError& e) {
            std::ostringstream os;
            os << "homotopy stage " << j << "/" << N << " (sigma_eps=" << pj.sigma_eps
               << ", gamma=" << pj.gamma << ", xi=" << pj.xi << ") failed: " << e.what();
            throw SolverError(os.str());
        }
        if (j == N) {
            CESolver final_solver(p, taxes, grid, chain);
            return final_solver.finish(values);
        }
    }
    throw SolverError("unreachable");
}

// ---------------------------------------------------------------------------
// EquilibriumSolution
// ---------------------------------------------------------------------------

namespace {
std::span<const double> pt(const double (&x)[2]) { return std::span<const double>(x, 2); }
}

double EquilibriumSolution::project_capital(double K_next) const {
    const double lo = grid.K_knots[0], hi = grid.K_knots[grid.n_K() - 1];
    return smooth_box(K_next, lo, hi, 0.012 * (hi - lo)).v;
}

double EquilibriumSolution::project_deposits(double D_next, double K_next) const {
    const double lo = grid.dtil_knots[0], hi = grid.dtil_knots[grid.n_dtil() - 1];
    return smooth_box(D_next / K_next, lo, hi, 0.012 * (hi - lo)).v * K_next;
}

EquilibriumSolution::Choices EquilibriumSolution::choices_at(const AggregateState& s) const {
    Choices c;
    const double x[2] = {s.K, s.D / s.K};
    bool e1 = false, e2 = false, e3 = false, e4 = false;
    c.C_w = C_w.eval(s.z_index, pt(x), &e1);
    c.C_e = C_e.eval(s.z_index, pt(x), &e2);
    c.L = L.eval(s.z_index, pt(x), &e3);
    c.D_next = D_next.eval(s.z_index, pt(x), &e4);
    c.extrapolated = e1 || e2 || e3 || e4;
    // Taxes see the resource-consistent capital price.
    const ProductionResult pr = production(shock_chain.z_values[s.z_index], s.K, c.L, params);
    const double I = pr.Y - c.C_w - c.C_e;
    const CapitalPrice cp = capital_price_and_profit(I / s.K, params);
    c.tau_l = taxes.tau_l(s, cp.q);
    c.tau_d = taxes.tau_d(s, cp.q);
    c.tau_k = taxes.tau_k(s, cp.q);
    return c;
}

EquilibriumSolution::Derived EquilibriumSolution::derived_at(const AggregateState& s) const {
    Derived d;
    d.ch = choices_at(s);
    const ProductionResult pr = production(shock_chain.z_values[s.z_index], s.K, d.ch.L, params);
    d.Y = pr.Y;
    d.W = pr.W;
    d.Rr = pr.R;
    d.I = pr.Y - d.ch.C_w - d.ch.C_e;
    d.x = d.I / s.K;
    const CapitalProduction cp = capital_production(d.x, params);
    d.q = 1.0 / cp.phi_prime;
    d.Pi = d.q * cp.phi - d.x;
    d.Khat = s.K * (cp.phi + 1.0 - params.delta);
    const double sav = s.D + (1.0 - d.ch.tau_l) * d.W * d.ch.L - d.ch.C_w;
    d.r_budget = d.ch.D_next / sav;
    d.T = d.ch.tau_l * d.W * d.ch.L + d.ch.tau_d * d.ch.D_next / d.r_budget +
          d.ch.tau_k * d.q * d.Khat;
    return d;
}

double EquilibriumSolution::r_hat(const AggregateState& s) const {
    const double x[2] = {s.K, s.D / s.K};
    return r.eval(s.z_index, pt(x));
}
double EquilibriumSolution::q_hat(const AggregateState& s) const {
    const double x[2] = {s.K, s.D / s.K};
    return q.eval(s.z_index, pt(x));
}
double EquilibriumSolution::I_hat(const AggregateState& s) const {
    const double x[2] = {s.K, s.D / s.K};
    return I.eval(s.z_index, pt(x));
}
double EquilibriumSolution::Knext_hat(const AggregateState& s) const {
    const double x[2] = {s.K, s.D / s.K};
    return K_next.eval(s.z_index, pt(x));
}

RiskMetrics EquilibriumSolution::risk_metrics(const AggregateState& s) const {
    const Derived d = derived_at(s);
    const int n = shock_chain.n();
    double Epay = 0.0, m_w = 0.0, m_e = 0.0, v_w = 0.0, v_e = 0.0;
    std::vector<double> lw(n, 0.0), le(n, 0.0), pay(n, 0.0);
    for (int zp = 0; zp < n; ++zp) {
        const double prob = shock_chain.P(s.z_index, zp);
        if (prob <= 0.0) continue;
        const double zeta = shock_chain.zeta_values[zp];
        const double Kp = project_capital(zeta * d.Khat);
        const AggregateState sp{Kp, project_deposits(d.ch.D_next, Kp), zp};
        const Derived dp = derived_at(sp);
        pay[zp] = zeta * (dp.Rr + (1.0 - params.delta) * dp.q + dp.Pi);
        lw[zp] = std::log(dp.ch.C_w);
        le[zp] = std::log(dp.ch.C_e);
        Epay += prob * pay[zp];
        m_w += prob * lw[zp];
        m_e += prob * le[zp];
    }
    for (int zp = 0; zp < n; ++zp) {
        const double prob = shock_chain.P(s.z_index, zp);
        if (prob <= 0.0) continue;
        v_w += prob * (lw[zp] - m_w) * (lw[zp] - m_w);
        v_e += prob * (le[zp] - m_e) * (le[zp] - m_e);
    }
    RiskMetrics rm;
    rm.risk_premium = Epay / d.q - r_hat(s);
    rm.vol_logCw = std::sqrt(std::max(v_w, 0.0));
    rm.vol_logCe = std::sqrt(std::max(v_e, 0.0));
    return rm;
}

FullResiduals EquilibriumSolution::equation_residuals(const AggregateState& s) const {
    FullResiduals out;
    const Derived d = derived_at(s);
    const WorkerUtility uw = utility_worker(d.ch.C_w, d.ch.L, params);
    const ExpertUtility ue = utility_expert(d.ch.C_e, params);
    const double rh = r_hat(s);
    const double qh = q_hat(s);
    const double Ih = I_hat(s);
    const double Kh = Knext_hat(s);

    const int n = shock_chain.n();
    double Ew = 0.0, Ee = 0.0, Epay = 0.0;
    bool extrap = d.ch.extrapolated;
    for (int zp = 0; zp < n; ++zp) {
        const double prob = shock_chain.P(s.z_index, zp);
        if (prob <= 0.0) continue;
        const double zeta = shock_chain.zeta_values[zp];
        const double Kp = project_capital(zeta * d.Khat);
        const AggregateState sp{Kp, project_deposits(d.ch.D_next, Kp), zp};
        const Choices cp = choices_at(sp);
        extrap = extrap || cp.extrapolated;
        const ProductionResult prp = production(shock_chain.z_values[zp], sp.K, cp.L, params);
        const double Ip = prp.Y - cp.C_w - cp.C_e;
        const CapitalPrice cpp = capital_price_and_profit(Ip / sp.K, params);
        const double payoff = zeta * (prp.R + (1.0 - params.delta) * cpp.q + cpp.Pi);
        Ew += prob * std::pow(cp.C_w, -params.gamma);
        const double uecp = std::pow(cp.C_e, -params.gamma);
        Ee += prob * uecp;
        Epay += prob * uecp * payoff;
    }

    out.res[0] = (1.0 - d.ch.tau_l) + uw.u_l / (uw.u_c * d.W);
    out.res[1] = 1.0 - params.beta * rh * Ew / uw.u_c;
    out.res[2] = (1.0 - d.ch.tau_d) - params.beta * rh * Ee / ue.u_c;
    out.res[3] = (1.0 + d.ch.tau_k) - (1.0 - d.ch.tau_d) * Epay / (d.q * rh * Ee);
    const CapitalProduction cpI = capital_production(Ih / s.K, params);
    out.res[4] = qh * cpI.phi_prime - 1.0;
    out.res[5] = (d.Y - Ih - d.ch.C_w - d.ch.C_e) / d.Y;
    out.res[6] = (Kh - s.K * (cpI.phi + 1.0 - params.delta)) / s.K;
    out.res[7] = (d.ch.D_next / rh + d.ch.C_w - s.D - (1.0 - d.ch.tau_l) * d.W * d.ch.L) / d.Y;
    out.extrapolated = extrap;
    return out;
}

ResidualReport EquilibriumSolution::certify(int density_factor, std::uint64_t seed) const {
    ResidualReport rep;
    std::mt19937_64 rng(seed);
    auto unif = [&rng](double lo, double hi) {
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        return lo + (hi - lo) * u;
    };
    const int per_slice = density_factor * grid.points();
    const double Klo = grid.K_knots[0], Khi = grid.K_knots[grid.n_K() - 1];
    const double dlo = grid.dtil_knots[0], dhi = grid.dtil_knots[grid.n_dtil() - 1];
    for (int s = 0; s < shock_chain.n(); ++s) {
        for (int t = 0; t < per_slice; ++t) {
            AggregateState st;
            st.K = unif(Klo, Khi);
            st.D = unif(dlo, dhi) * st.K;
            st.z_index = s;
            const FullResiduals fr = equation_residuals(st);
            for (int k = 0; k < 8; ++k) {
                rep.max_abs[k] = std::max(rep.max_abs[k], std::abs(fr.res[k]));
                rep.mean_abs[k] += std::abs(fr.res[k]);
            }
            if (fr.extrapolated) ++rep.extrapolated_points;
            ++rep.points;
        }
    }
    for (int k = 0; k < 8; ++k) rep.mean_abs[k] /= std::max(rep.points, 1);
    return rep;
}

}  // namespace mpru
