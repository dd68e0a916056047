#pragma once
#include "mpru/params.hpp"

namespace mpru {

// Worker period utility u(c,l) = c^(1-gamma)/(1-gamma) - psi l^(1+nu)/(1+nu)
// with first and second partials (the utility is separable, so there are no
// cross terms). gamma = 1 takes the log branch.
struct WorkerUtility {
    double u, u_c, u_l, u_cc, u_ll;
};
WorkerUtility utility_worker(double c, double l, const ModelParams& p);

// Expert period utility u(c) = c^(1-gamma)/(1-gamma).
struct ExpertUtility {
    double u, u_c, u_cc;
};
ExpertUtility utility_expert(double c, const ModelParams& p);

// Capital production Phi(x) = ((A(x-delta)+1)^xi - 1)/(A xi) + delta for the
// investment-to-capital ratio x. Satisfies Phi(delta)=delta, Phi'(delta)=1.
struct CapitalProduction {
    double phi, phi_prime, phi_second;
};
CapitalProduction capital_production(double x, const ModelParams& p);

// Cobb-Douglas production with factor prices R = F_K, W = F_L.
struct ProductionResult {
    double Y, R, W;
};
ProductionResult production(double Z, double K, double L, const ModelParams& p);

// Capital price q = 1/Phi'(x) and per-unit production profit
// Pi = q Phi(x) - x.
struct CapitalPrice {
    double q, Pi;
};
CapitalPrice capital_price_and_profit(double x, const ModelParams& p);

// Maps an expert population share theta to the utilitarian Pareto weight and
// the adjusted labor disutility scale of the equal-measures economy.
struct PopulationWeights {
    double lambda_weight, psi_hat;
};
PopulationWeights measures_to_weights(double theta, const ModelParams& p);

}  // namespace mpru
