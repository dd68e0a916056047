#include "mpru/primitives.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mpru {

namespace {
double crra(double c, double gamma) {
    if (gamma == 1.0) return std::log(c);
    return (std::pow(c, 1.0 - gamma) - 0.0) / (1.0 - gamma);
}
}  // namespace

WorkerUtility utility_worker(double c, double l, const ModelParams& p) {
    if (!(c > 0.0)) throw std::domain_error("utility_worker: consumption must be positive, got " + std::to_string(c));
    if (!(l >= 0.0)) throw std::domain_error("utility_worker: labor must be nonnegative, got " + std::to_string(l));
    WorkerUtility r;
    r.u = crra(c, p.gamma) - p.psi * std::pow(l, 1.0 + p.nu) / (1.0 + p.nu);
    r.u_c = std::pow(c, -p.gamma);
    r.u_l = -p.psi * std::pow(l, p.nu);
    r.u_cc = -p.gamma * std::pow(c, -p.gamma - 1.0);
    r.u_ll = -p.psi * p.nu * std::pow(l, p.nu - 1.0);
    return r;
}

ExpertUtility utility_expert(double c, const ModelParams& p) {
    if (!(c > 0.0)) throw std::domain_error("utility_expert: consumption must be positive, got " + std::to_string(c));
    ExpertUtility r;
    r.u = crra(c, p.gamma);
    r.u_c = std::pow(c, -p.gamma);
    r.u_cc = -p.gamma * std::pow(c, -p.gamma - 1.0);
    return r;
}

CapitalProduction capital_production(double x, const ModelParams& p) {
    const double base = p.A_cap * (x - p.delta) + 1.0;
    if (!(base > 0.0))
        throw std::domain_error("capital_production: A(x-delta)+1 must be positive at x = " + std::to_string(x));
    CapitalProduction r;
    r.phi = (std::pow(base, p.xi) - 1.0) / (p.A_cap * p.xi) + p.delta;
    r.phi_prime = std::pow(base, p.xi - 1.0);
    r.phi_second = (p.xi - 1.0) * p.A_cap * std::pow(base, p.xi - 2.0);
    return r;
}

ProductionResult production(double Z, double K, double L, const ModelParams& p) {
    if (!(K > 0.0)) throw std::domain_error("production: capital must be positive, got " + std::to_string(K));
    if (!(L > 0.0)) throw std::domain_error("production: labor must be positive, got " + std::to_string(L));
    ProductionResult r;
    r.Y = std::exp(Z) * std::pow(K, p.alpha) * std::pow(L, 1.0 - p.alpha);
    r.R = p.alpha * r.Y / K;
    r.W = (1.0 - p.alpha) * r.Y / L;
    return r;
}

CapitalPrice capital_price_and_profit(double x, const ModelParams& p) {
    const CapitalProduction cp = capital_production(x, p);
    CapitalPrice r;
    r.q = 1.0 / cp.phi_prime;
    r.Pi = r.q * cp.phi - x;
    return r;
}

PopulationWeights measures_to_weights(double theta, const ModelParams& p) {
    if (!(theta > 0.0 && theta < 1.0))
        throw std::domain_error("measures_to_weights: theta must be in (0,1), got " + std::to_string(theta));
    PopulationWeights r;
    const double tg = std::pow(theta, p.gamma);
    const double og = std::pow(1.0 - theta, p.gamma);
    r.lambda_weight = tg / (tg + og);
    r.psi_hat = p.psi * std::pow(1.0 - theta, p.nu + p.gamma);
    return r;
}

}  // namespace mpru
