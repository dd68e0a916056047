#pragma once
#include "mpru/params.hpp"

namespace mpru {

// Deterministic zero-tax steady state at a given level of deposits. The
// riskless rate is 1/beta; the wealth distribution (D) indexes a continuum of
// steady states. Used for grid bounds, solver seeds and as a test oracle.
struct SteadyState {
    double K, L, Y, I, C_w, C_e, W, R, r, q;
};

SteadyState deterministic_steady_state(const ModelParams& p, double D = 0.0);

}  // namespace mpru
