#pragma once

namespace mpru {

// Aggregate state of the economy: capital, deposits owed by experts, and the
// discrete index into the joint (Z, zeta) shock chain.
struct AggregateState {
    double K = 0.0;
    double D = 0.0;
    int z_index = 0;
};

// State augmented with the lagged multiplier co-state used by the Ramsey
// solver. mu = 0 is the time-0 state.
struct AugmentedState {
    AggregateState base;
    double mu = 0.0;
};

}  // namespace mpru
