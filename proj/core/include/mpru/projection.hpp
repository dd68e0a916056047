#pragma once
#include <cmath>

namespace mpru {

// Smooth saturation of x into [lo, hi] with transition width w: the identity
// well inside the box, asymptotically constant outside, C-infinity
// throughout. Used to project successor states onto the solver's grid box so
// edge overhangs cannot feed back through unanchored spline extrapolation.
struct SmoothProj {
    double v;   // projected value
    double dv;  // d(projected)/d(raw)
};

inline SmoothProj smooth_box(double x, double lo, double hi, double w) {
    auto softplus = [](double t) {
        if (t > 30.0) return t;
        if (t < -30.0) return std::exp(t);
        return std::log1p(std::exp(t));
    };
    auto sigmoid = [](double t) {
        if (t > 30.0) return 1.0;
        if (t < -30.0) return std::exp(t);
        return 1.0 / (1.0 + std::exp(-t));
    };
    const double t1 = (hi - x) / w;
    const double y = hi - w * softplus(t1);
    const double dy = sigmoid(t1);
    const double t2 = (y - lo) / w;
    const double z = lo + w * softplus(t2);
    const double dz = sigmoid(t2);
    return {z, dy * dz};
}

}  // namespace mpru
