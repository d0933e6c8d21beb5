#pragma once

// Adaptive Dormand-Prince 5(4) integration of the asset/bond system with
// 4th-order dense output, PI step-size control, refined price-extremum and
// expansion-exponent events, and a divergence guard.
//
// The optional third state component s accumulates the Jacobian trace along
// the trajectory; the expansion exponent is Lambda(t) = s(t)/t.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "bubblecycle/model.hpp"

namespace bubblecycle {

struct IntegrationConfig {
    double rtol = 1e-10;
    double atol = 1e-12;
    double max_step = std::numeric_limits<double>::infinity();
    double t_end = 100.0;
    State initial{1.0, 0.1};
    double divergence_cap = kDivergenceCap;
    // Output sample spacing; <= 0 stores every accepted step.
    double sample_dt = 0.0;
    bool with_expansion = false;
};

enum class TerminationStatus { Completed, Diverged };

enum class EventKind { XMax, XMin, ZMax, ZMin, LambdaMax, LambdaMin };

inline const char* to_string(EventKind k) {
    switch (k) {
        case EventKind::XMax: return "x_max";
        case EventKind::XMin: return "x_min";
        case EventKind::ZMax: return "z_max";
        case EventKind::ZMin: return "z_min";
        case EventKind::LambdaMax: return "lambda_max";
        case EventKind::LambdaMin: return "lambda_min";
    }
    return "?";
}

struct Event {
    EventKind kind;
    double time;
    double value;  // x, z, or Lambda at the refined time
};

struct Trajectory {
    ModelParams params;
    std::vector<double> times;
    std::vector<State> states;
    std::vector<double> lambda;  // empty unless integrated with expansion
    std::vector<Event> events;
    TerminationStatus status = TerminationStatus::Completed;

    bool has_expansion() const { return !lambda.empty(); }
};

namespace detail {

using Vec3 = std::array<double, 3>;

// Right-hand side; the growth terms are evaluated in log form so region-E
// trajectories stay finite all the way to the divergence cap.
inline Vec3 rhs(const ModelParams& p, const Vec3& y) {
    const double x = y[0], z = y[1];
    const double a1 = -p.b * x * z;
    const double a2 = -p.g * x;
    const double gx = x > 0.0 ? std::exp(std::min(700.0, 2.0 * std::log(x) + std::min(700.0, std::max(-700.0, a1)))) : 0.0;
    const double gz = z > 0.0 ? std::exp(std::min(700.0, 2.0 * std::log(z) + std::min(700.0, std::max(-700.0, a2)))) : 0.0;
    const double e1 = clamped_exp(a1);
    const double e2 = clamped_exp(a2);
    const double tr = (1.0 - (2.0 * x - p.b * x * x * z) * e1) + (1.0 - 2.0 * z * e2);
    return {x - gx, z - gz, std::isfinite(tr) ? tr : 0.0};
}

// Dormand-Prince RK5(4)7M tableau.
struct Dopri5Step {
    Vec3 y0{}, y1{};
    std::array<Vec3, 5> rcont{};  // dense-output coefficients
    double t0 = 0.0, h = 0.0;

    Vec3 eval(double t) const {
        const double th = (t - t0) / h;
        const double th1 = 1.0 - th;
        Vec3 out;
        for (int i = 0; i < 3; ++i) {
            out[i] = rcont[0][i] +
                     th * (rcont[1][i] +
                           th1 * (rcont[2][i] + th * (rcont[3][i] + th1 * rcont[4][i])));
        }
        return out;
    }
};

class Dopri5 {
  public:
    Dopri5(const ModelParams& p, double rtol, double atol, bool err_on_s)
        : p_(p), rtol_(rtol), atol_(atol), err_on_s_(err_on_s) {}

    // One adaptive step from (t, y) with proposed size h (already clamped).
    // Returns true when accepted; fills step and the next proposed size.
    bool try_step(double t, const Vec3& y, const Vec3& f0, double h, Dopri5Step& step,
                  Vec3& f1_out, double& h_next) {
        static constexpr double a21 = 1.0 / 5;
        static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
        static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
        static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                                a53 = 64448.0 / 6561, a54 = -212.0 / 729;
        static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33,
                                a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                                a65 = -5103.0 / 18656;
        static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                                b5 = -2187.0 / 6784, b6 = 11.0 / 84;
        static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                                e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
        static constexpr double d1 = -12715105075.0 / 11282082432.0,
                                d3 = 87487479700.0 / 32700410799.0,
                                d4 = -10690763975.0 / 1880347072.0,
                                d5 = 701980252875.0 / 199316789632.0,
                                d6 = -1453857185.0 / 822651844.0,
                                d7 = 69997945.0 / 29380423.0;

        Vec3 k1 = f0, k2, k3, k4, k5, k6, k7, yt;
        auto stage = [&](const std::array<double, 6>& a, int n) {
            for (int i = 0; i < 3; ++i) {
                double acc = 0.0;
                const Vec3* ks[6] = {&k1, &k2, &k3, &k4, &k5, &k6};
                for (int j = 0; j < n; ++j) acc += a[j] * (*ks[j])[i];
                yt[i] = y[i] + h * acc;
            }
            return rhs(p_, yt);
        };
        k2 = stage({a21}, 1);
        k3 = stage({a31, a32}, 2);
        k4 = stage({a41, a42, a43}, 3);
        k5 = stage({a51, a52, a53, a54}, 4);
        k6 = stage({a61, a62, a63, a64, a65}, 5);
        Vec3 y1;
        for (int i = 0; i < 3; ++i) {
            y1[i] = y[i] + h * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
        }
        k7 = rhs(p_, y1);

        double err = 0.0;
        const int ncomp = err_on_s_ ? 3 : 2;
        for (int i = 0; i < ncomp; ++i) {
            const double ei = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] +
                                   e6 * k6[i] + e7 * k7[i]);
            const double sc = atol_ + rtol_ * std::max(std::abs(y[i]), std::abs(y1[i]));
            err += (ei / sc) * (ei / sc);
        }
        err = std::sqrt(err / ncomp);

        const double fac11 = std::pow(std::max(err, 1e-32), 0.17);
        const double fac = fac11 / std::pow(facold_, 0.04);
        if (err <= 1.0 || !std::isfinite(err)) {
            if (!std::isfinite(err)) {
                // Overflowed state: shrink hard and reject.
                h_next = 0.25 * h;
                return false;
            }
            facold_ = std::max(err, 1e-4);
            h_next = h / std::clamp(fac / 0.9, 0.2, 10.0);
            step.t0 = t;
            step.h = h;
            step.y0 = y;
            step.y1 = y1;
            for (int i = 0; i < 3; ++i) {
                const double dy = y1[i] - y[i];
                step.rcont[0][i] = y[i];
                step.rcont[1][i] = dy;
                step.rcont[2][i] = h * k1[i] - dy;
                step.rcont[3][i] = dy - h * k7[i] - step.rcont[2][i];
                step.rcont[4][i] = h * (d1 * k1[i] + d3 * k3[i] + d4 * k4[i] + d5 * k5[i] +
                                        d6 * k6[i] + d7 * k7[i]);
            }
            f1_out = k7;
            return true;
        }
        h_next = h / std::clamp(fac / 0.9, 1.1, 10.0);
        return false;
    }

  private:
    ModelParams p_;
    double rtol_, atol_;
    bool err_on_s_;
    double facold_ = 1e-4;
};

}  // namespace detail

inline void validate(const IntegrationConfig& c) {
    if (!(c.rtol > 0.0) || !(c.atol > 0.0) || !(c.t_end > 0.0) || !(c.max_step > 0.0) ||
        !(c.divergence_cap > 0.0) || !std::isfinite(c.t_end)) {
        throw std::invalid_argument("integrate: invalid config");
    }
    if (!(c.initial.x >= 0.0) || !(c.initial.z >= 0.0) || !std::isfinite(c.initial.x) ||
        !std::isfinite(c.initial.z)) {
        throw std::invalid_argument("integrate: initial state must be finite and non-negative");
    }
}

namespace detail {

// Event functions are evaluated on dense output with the analytic
// derivative; bisection refines sign changes to 1e-9 in time.
template <class F>
double refine_crossing(const Dopri5Step& st, double ta, double tb, const F& f) {
    double fa = f(st.eval(ta));
    for (int i = 0; i < 80 && tb - ta > 1e-9; ++i) {
        const double tm = 0.5 * (ta + tb);
        const double fm = f(st.eval(tm));
        if ((fm < 0.0) == (fa < 0.0)) {
            ta = tm;
            fa = fm;
        } else {
            tb = tm;
        }
    }
    return 0.5 * (ta + tb);
}

}  // namespace detail

inline Trajectory integrate(const ModelParams& params, const IntegrationConfig& config) {
    validate(config);
    require_finite(params, config.initial, "integrate");

    Trajectory traj;
    traj.params = params;
    const bool expansion = config.with_expansion;

    detail::Vec3 y{config.initial.x, config.initial.z, 0.0};
    double t = 0.0;
    detail::Vec3 f = detail::rhs(params, y);

    const auto push_sample = [&](double ts, const detail::Vec3& ys) {
        if (!traj.times.empty() && ts <= traj.times.back()) return;
        traj.times.push_back(ts);
        traj.states.push_back({ys[0], ys[1]});
        if (expansion) {
            // Lambda(t) = s(t)/t; the t->0 limit is the trace at the start.
            traj.lambda.push_back(ts > 0.0 ? ys[2] / ts : f[2]);
        }
    };
    push_sample(0.0, y);

    detail::Dopri5 stepper(params, config.rtol, config.atol, expansion);
    double h = std::min({config.max_step, 1e-2, config.t_end});
    double next_sample = config.sample_dt > 0.0 ? config.sample_dt : 0.0;

    int rejects_in_a_row = 0;
    while (t < config.t_end) {
        h = std::min(h, config.t_end - t);
        h = std::min(h, config.max_step);
        detail::Dopri5Step step;
        detail::Vec3 f1;
        double h_next;
        if (!stepper.try_step(t, y, f, h, step, f1, h_next)) {
            h = h_next;
            if (++rejects_in_a_row > 200) {
                traj.status = TerminationStatus::Diverged;
                break;
            }
            continue;
        }
        rejects_in_a_row = 0;
        const double t1 = t + step.h;

        // Refined events inside the accepted step.
        struct Crossing {
            EventKind max_kind, min_kind;
            double fa, fb;
            int value_index;  // 0 = x, 1 = z, 2 = lambda
        };
        std::vector<Crossing> checks = {
            {EventKind::XMax, EventKind::XMin, f[0], f1[0], 0},
            {EventKind::ZMax, EventKind::ZMin, f[1], f1[1], 1},
        };
        if (expansion && t > 0.0) {
            // d/dt Lambda has the sign of q(t) = t*Tr - s.
            checks.push_back({EventKind::LambdaMax, EventKind::LambdaMin,
                              t * f[2] - y[2], t1 * f1[2] - step.y1[2], 2});
        }
        std::vector<std::pair<double, Event>> step_events;
        for (const auto& c : checks) {
            if (c.fa == 0.0 || (c.fa < 0.0) == (c.fb < 0.0)) continue;
            double te;
            if (c.value_index == 2) {
                // Time enters q(t) = t*Tr - s explicitly, so bisect by hand.
                double ta = t, tb = t1;
                double fa = c.fa;
                for (int i = 0; i < 80 && tb - ta > 1e-9; ++i) {
                    const double tm = 0.5 * (ta + tb);
                    const auto ym = step.eval(tm);
                    const double fm = tm * detail::rhs(params, ym)[2] - ym[2];
                    if ((fm < 0.0) == (fa < 0.0)) {
                        ta = tm;
                        fa = fm;
                    } else {
                        tb = tm;
                    }
                }
                te = 0.5 * (ta + tb);
            } else {
                const int vi = c.value_index;
                te = detail::refine_crossing(step, t, t1, [&](const detail::Vec3& ys) {
                    return detail::rhs(params, ys)[vi];
                });
            }
            const auto ye = step.eval(te);
            const EventKind kind = c.fa > 0.0 ? c.max_kind : c.min_kind;
            double value = c.value_index == 0 ? ye[0]
                           : c.value_index == 1 ? ye[1]
                                                : (te > 0.0 ? ye[2] / te : 0.0);
            step_events.push_back({te, Event{kind, te, value}});
        }
        std::sort(step_events.begin(), step_events.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });

        // Emit uniform-grid samples and event samples in time order.
        if (config.sample_dt > 0.0) {
            std::size_t ev = 0;
            while (next_sample <= t1 + 1e-14 || ev < step_events.size()) {
                const bool grid_due = next_sample <= t1 + 1e-14;
                const bool event_due = ev < step_events.size();
                if (grid_due && (!event_due || next_sample <= step_events[ev].first)) {
                    push_sample(std::min(next_sample, t1), step.eval(std::min(next_sample, t1)));
                    next_sample += config.sample_dt;
                } else if (event_due) {
                    push_sample(step_events[ev].first, step.eval(step_events[ev].first));
                    ++ev;
                } else {
                    break;
                }
            }
        }
        for (auto& [te, e] : step_events) traj.events.push_back(e);

        t = t1;
        y = step.y1;
        f = f1;
        if (config.sample_dt <= 0.0) push_sample(t, y);

        if (y[0] > config.divergence_cap || y[1] > config.divergence_cap ||
            !std::isfinite(y[0]) || !std::isfinite(y[1])) {
            traj.status = TerminationStatus::Diverged;
            break;
        }
        h = h_next;
    }
    if (traj.status == TerminationStatus::Completed && config.sample_dt > 0.0) {
        // Make sure t_end itself is in the record.
        if (traj.times.back() < config.t_end - 1e-12) push_sample(t, y);
    }
    return traj;
}

inline Trajectory integrate_with_expansion(const ModelParams& params, IntegrationConfig config) {
    config.with_expansion = true;
    return integrate(params, config);
}

inline std::vector<Event> locate_extrema(const Trajectory& traj, EventKind kind) {
    std::vector<Event> out;
    for (const Event& e : traj.events) {
        if (e.kind == kind) out.push_back(e);
    }
    return out;
}

// The Lambda maximum announcing the first price peak: the last local
// maximum of Lambda preceding the first x-maximum. The start-up value of
// Lambda (the instantaneous trace at t -> 0) can exceed it, so a plain
// running maximum would report the transient instead.
struct LambdaMaximum {
    double time = 0.0;
    double value = -std::numeric_limits<double>::infinity();
};

inline LambdaMaximum lambda_maximum(const Trajectory& traj) {
    if (!traj.has_expansion()) {
        throw std::domain_error("lambda_maximum: trajectory has no expansion series");
    }
    double first_peak = std::numeric_limits<double>::infinity();
    for (const Event& e : traj.events) {
        if (e.kind == EventKind::XMax) {
            first_peak = e.time;
            break;
        }
    }
    LambdaMaximum best;
    for (const Event& e : traj.events) {
        if (e.kind == EventKind::LambdaMax && e.time < first_peak) {
            best = {e.time, e.value};
        }
    }
    if (best.value > -std::numeric_limits<double>::infinity()) return best;
    // No refined event (e.g. monotone Lambda): fall back to the samples.
    for (std::size_t i = 0; i < traj.times.size(); ++i) {
        if (traj.times[i] > 0.0 && traj.times[i] < first_peak && traj.lambda[i] > best.value) {
            best = {traj.times[i], traj.lambda[i]};
        }
    }
    return best;
}

}  // namespace bubblecycle
