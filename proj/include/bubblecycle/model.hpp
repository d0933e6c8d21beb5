#pragma once

// Coupled asset/bond price dynamics in dimensionless form:
//   dx/dt = x - x^2 exp(-b x z)
//   dz/dt = z - z^2 exp(-g x)
// x is the asset price, z the bond price; b is the fundamental log-price
// rate, g the log-discount rate. All quantities are dimensionless.

#include <cmath>
#include <stdexcept>
#include <string>

namespace bubblecycle {

struct ModelParams {
    double b = 0.0;
    double g = 0.0;
};

struct State {
    double x = 0.0;
    double z = 0.0;
};

struct JacobianMatrix {
    double j11 = 0.0, j12 = 0.0;
    double j21 = 0.0, j22 = 0.0;

    double trace() const { return j11 + j22; }
};

struct Derivative {
    double dx_dt = 0.0;
    double dz_dt = 0.0;
};

// Trajectories that inflate past this are reported as diverged, never as inf.
inline constexpr double kDivergenceCap = 1e300;

// Exponent arguments are clamped so exp() never overflows; beyond the cap
// the divergence signal fires long before the clamp matters.
inline double clamped_exp(double arg) {
    if (arg > 700.0) arg = 700.0;
    if (arg < -700.0) arg = -700.0;
    return std::exp(arg);
}

inline void require_finite(const ModelParams& p, const State& s, const char* where) {
    if (!std::isfinite(p.b) || !std::isfinite(p.g) ||
        !std::isfinite(s.x) || !std::isfinite(s.z)) {
        throw std::domain_error(std::string(where) + ": non-finite input");
    }
}

inline Derivative vector_field(const ModelParams& p, const State& s) {
    require_finite(p, s, "vector_field");
    const double e1 = clamped_exp(-p.b * s.x * s.z);
    const double e2 = clamped_exp(-p.g * s.x);
    return {s.x - s.x * s.x * e1, s.z - s.z * s.z * e2};
}

inline JacobianMatrix jacobian(const ModelParams& p, const State& s) {
    require_finite(p, s, "jacobian");
    const double e1 = clamped_exp(-p.b * s.x * s.z);
    const double e2 = clamped_exp(-p.g * s.x);
    JacobianMatrix j;
    j.j11 = 1.0 - (2.0 * s.x - p.b * s.x * s.x * s.z) * e1;
    j.j12 = p.b * s.x * s.x * s.x * e1;
    j.j21 = p.g * s.z * s.z * e2;
    j.j22 = 1.0 - 2.0 * s.z * e2;
    return j;
}

inline double jacobian_trace(const ModelParams& p, const State& s) {
    return jacobian(p, s).trace();
}

}  // namespace bubblecycle
