#pragma once
#include <functional>

#include "mpru/state.hpp"

namespace mpru {

// State-dependent tax schedule. Each rate may depend on the capital price q,
// which is endogenous (the simple rule uses it), so q is part of the
// signature; schedules that ignore it are free to do so. *_dq returns the
// partial with respect to q for the solver Jacobian.
struct TaxSchedule {
    using Rate = std::function<double(const AggregateState&, double q)>;

    Rate tau_l = [](const AggregateState&, double) { return 0.0; };
    Rate tau_d = [](const AggregateState&, double) { return 0.0; };
    Rate tau_k = [](const AggregateState&, double) { return 0.0; };
    Rate tau_l_dq = [](const AggregateState&, double) { return 0.0; };
    Rate tau_d_dq = [](const AggregateState&, double) { return 0.0; };
    Rate tau_k_dq = [](const AggregateState&, double) { return 0.0; };

    bool is_zero = true;  // manifest tag only; solvers never branch on it

    static TaxSchedule zero() { return TaxSchedule{}; }
};

// tau_d(S) = tau_d1 * D * (D/(qK) - tau_d2): a deposit-issuance tax that is
// negative below the target leverage tau_d2 and positive above it.
struct SimpleRule {
    double tau_d1 = 0.0;
    double tau_d2 = 0.0;

    double tax(const AggregateState& s, double q) const {
        return tau_d1 * s.D * (s.D / (q * s.K) - tau_d2);
    }
    double tax_dq(const AggregateState& s, double q) const {
        return -tau_d1 * s.D * s.D / (q * q * s.K);
    }

    TaxSchedule schedule() const {
        TaxSchedule t;
        SimpleRule r = *this;
        t.tau_d = [r](const AggregateState& s, double q) { return r.tax(s, q); };
        t.tau_d_dq = [r](const AggregateState& s, double q) { return r.tax_dq(s, q); };
        t.is_zero = (tau_d1 == 0.0);
        return t;
    }
};

}  // namespace mpru
