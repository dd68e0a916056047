#include "mpru/steady_state.hpp"

#include <cmath>

#include "mpru/errors.hpp"

namespace mpru {

SteadyState deterministic_steady_state(const ModelParams& p, double D) {
    SteadyState ss;
    ss.r = 1.0 / p.beta;
    ss.q = 1.0;  // I/K = delta and Phi'(delta) = 1
    ss.R = 1.0 / p.beta - 1.0 + p.delta;
    const double KL = std::pow(p.alpha / ss.R, 1.0 / (1.0 - p.alpha));
    ss.W = (1.0 - p.alpha) * std::pow(KL, p.alpha);

    // Labor solves psi L^nu (C_w)^gamma = W with C_w = (1-beta) D + W L.
    // Bisect on L; the left side is increasing in L.
    double lo = 1e-10, hi = 10.0;
    auto excess = [&](double L) {
        const double cw = (1.0 - p.beta) * D + ss.W * L;
        return p.psi * std::pow(L, p.nu) * std::pow(cw, p.gamma) - ss.W;
    };
    while (excess(hi) < 0.0 && hi < 1e8) hi *= 2.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (excess(mid) > 0.0)
            hi = mid;
        else
            lo = mid;
    }
    ss.L = 0.5 * (lo + hi);
    ss.K = KL * ss.L;
    ss.Y = std::pow(KL, p.alpha) * ss.L;
    ss.I = p.delta * ss.K;
    ss.C_w = (1.0 - p.beta) * D + ss.W * ss.L;
    ss.C_e = ss.Y - ss.I - ss.C_w;
    if (!(ss.C_e > 0.0))
        throw SolverError("deterministic steady state: expert consumption nonpositive at D = " +
                          std::to_string(D));
    return ss;
}

}  // namespace mpru
