#pragma once

// Bubble detection and quantification on region-C trajectories: amplitude,
// half-maximum width, asset-bond lag, inter-bubble periods, the
// super-exponential approximant near a price peak, and the critical-exponent
// estimators for the period and amplitude divergences.

#include <algorithm>
#include <cmath>
#include <functional>
#include <future>
#include <optional>
#include <stdexcept>
#include <vector>

#include "bubblecycle/equilibria.hpp"
#include "bubblecycle/integrate.hpp"
#include "bubblecycle/model.hpp"

namespace bubblecycle {

struct BubbleEvent {
    int index = 0;
    double t_peak = 0.0;
    double amplitude = 0.0;  // A = x(t_peak)
    double width = 0.0;      // FWHM in time units
    double t_zmin = 0.0;     // following bond-price minimum
    double lag = 0.0;        // t_zmin - t_peak
    double relative_lag = 0.0;  // lag / width
    double period_prev = 0.0;   // t_peak - previous t_peak, 0 for the first
};

struct BubbleStats {
    std::vector<double> periods;
    int count = 0;
    double mean_amplitude = 0.0;
    double mean_width = 0.0;
    double mean_period = 0.0;
    double ratio_r = 0.0;  // mean width / mean period
};

struct TransientPolicy {
    enum class Mode { PeriodConvergence, AbsoluteCutoff, None };
    Mode mode = Mode::PeriodConvergence;
    double cutoff_time = 0.0;  // for AbsoluteCutoff

    static TransientPolicy none() { return {Mode::None, 0.0}; }
    static TransientPolicy cutoff(double t) { return {Mode::AbsoluteCutoff, t}; }
};

namespace detail {

inline double interp_x(const Trajectory& traj, std::size_t i0, std::size_t i1, double level) {
    // Linear interpolation of the crossing x = level between samples i0, i1.
    const double x0 = traj.states[i0].x, x1 = traj.states[i1].x;
    const double t0 = traj.times[i0], t1 = traj.times[i1];
    if (x1 == x0) return 0.5 * (t0 + t1);
    return t0 + (level - x0) / (x1 - x0) * (t1 - t0);
}

inline std::size_t sample_index_at(const Trajectory& traj, double t) {
    const auto it = std::lower_bound(traj.times.begin(), traj.times.end(), t);
    return static_cast<std::size_t>(std::distance(traj.times.begin(), it));
}

}  // namespace detail

// FWHM of the bubble peaked at t_peak, measured at half amplitude x = A/2.
// Crossing times are linearly interpolated on the stored samples; nullopt
// when the trajectory never drops to A/2 around the peak (shallow near-Hopf
// cycles).
inline std::optional<double> bubble_width(const Trajectory& traj, double t_peak,
                                          double amplitude) {
    const std::size_t n = traj.times.size();
    if (n < 3) return std::nullopt;
    std::size_t ip = detail::sample_index_at(traj, t_peak);
    if (ip >= n) ip = n - 1;
    // Search only between the adjacent x-maxima, so neighboring bubbles
    // cannot leak into the trough or the crossings.
    double t_lo = traj.times.front(), t_hi = traj.times.back();
    for (const Event& e : traj.events) {
        if (e.kind != EventKind::XMax) continue;
        if (e.time < t_peak - 1e-9) t_lo = std::max(t_lo, e.time);
        if (e.time > t_peak + 1e-9 && e.time < t_hi) t_hi = e.time;
    }
    const std::size_t i_lo = detail::sample_index_at(traj, t_lo);
    std::size_t i_hi = detail::sample_index_at(traj, t_hi);
    if (i_hi >= n) i_hi = n - 1;
    double trough = amplitude;
    for (std::size_t i = i_lo; i <= i_hi; ++i) trough = std::min(trough, traj.states[i].x);
    const double level = 0.5 * amplitude;
    if (level <= trough) return std::nullopt;
    std::optional<double> tl, tr;
    for (std::size_t i = ip; i-- > i_lo;) {
        if (traj.states[i].x < level) {
            tl = detail::interp_x(traj, i, i + 1, level);
            break;
        }
    }
    for (std::size_t i = ip; i + 1 <= i_hi; ++i) {
        if (traj.states[i + 1].x < level) {
            tr = detail::interp_x(traj, i, i + 1, level);
            break;
        }
    }
    if (!tl || !tr || !(*tr > *tl)) return std::nullopt;
    return *tr - *tl;
}

inline std::vector<BubbleEvent> detect_bubbles(const Trajectory& traj,
                                               const TransientPolicy& policy = {}) {
    std::vector<Event> peaks = locate_extrema(traj, EventKind::XMax);
    const std::vector<Event> zmins = locate_extrema(traj, EventKind::ZMin);

    if (policy.mode == TransientPolicy::Mode::AbsoluteCutoff) {
        std::erase_if(peaks, [&](const Event& e) { return e.time < policy.cutoff_time; });
    } else if (policy.mode == TransientPolicy::Mode::PeriodConvergence && peaks.size() >= 3) {
        std::size_t keep_from = peaks.size();  // none, unless convergence is found
        for (std::size_t i = 0; i + 2 < peaks.size(); ++i) {
            const double l0 = peaks[i + 1].time - peaks[i].time;
            const double l1 = peaks[i + 2].time - peaks[i + 1].time;
            if (std::abs(l1 - l0) <= 0.01 * std::max(l0, l1)) {
                keep_from = i;
                break;
            }
        }
        peaks.erase(peaks.begin(), peaks.begin() + static_cast<long>(keep_from));
    }

    std::vector<BubbleEvent> out;
    double prev_peak = -1.0;
    for (const Event& p : peaks) {
        BubbleEvent b;
        b.index = static_cast<int>(out.size());
        b.t_peak = p.time;
        b.amplitude = p.value;
        const auto zi = std::find_if(zmins.begin(), zmins.end(),
                                     [&](const Event& e) { return e.time > p.time; });
        if (zi != zmins.end()) {
            b.t_zmin = zi->time;
            b.lag = zi->time - p.time;
        }
        if (const auto w = bubble_width(traj, p.time, p.value)) {
            b.width = *w;
            if (b.lag > 0.0) b.relative_lag = b.lag / b.width;
        }
        if (prev_peak >= 0.0) b.period_prev = p.time - prev_peak;
        prev_peak = p.time;
        out.push_back(b);
    }
    return out;
}

struct TimeWindow {
    double t0 = 0.0;
    double t1 = std::numeric_limits<double>::infinity();
};

inline BubbleStats bubble_stats(const std::vector<BubbleEvent>& events,
                                const TimeWindow& window = {}) {
    BubbleStats s;
    double sum_a = 0.0, sum_w = 0.0;
    double prev = -1.0;
    int n_w = 0;
    for (const BubbleEvent& e : events) {
        if (e.t_peak < window.t0 || e.t_peak > window.t1) continue;
        ++s.count;
        sum_a += e.amplitude;
        if (e.width > 0.0) {
            sum_w += e.width;
            ++n_w;
        }
        if (prev >= 0.0) s.periods.push_back(e.t_peak - prev);
        prev = e.t_peak;
    }
    if (s.count > 0) s.mean_amplitude = sum_a / s.count;
    if (n_w > 0) s.mean_width = sum_w / n_w;
    if (!s.periods.empty()) {
        for (double l : s.periods) s.mean_period += l;
        s.mean_period /= static_cast<double>(s.periods.size());
        if (s.mean_period > 0.0) s.ratio_r = s.mean_width / s.mean_period;
    }
    return s;
}

// ---------------------------------------------------------------------------
// Super-exponential approximant near a peak:
//   x_app(t) = c1 (tL - t)^{-beta} exp[ c2 (tL - t)^{-alpha} ]
// with fixed critical exponents alpha = 2/5, beta = 1/5 and tL the time of
// the expansion-exponent maximum preceding the peak.
// ---------------------------------------------------------------------------

struct SuperExpFit {
    double c1 = 0.0;
    double c2 = 0.0;
    double alpha = 0.4;  // fixed
    double beta = 0.2;   // fixed
    double t_lambda = 0.0;
    double window_start = 0.0;
    double window_end = 0.0;
    double rms_log_residual = 0.0;
    int n_points = 0;

    double eval(double t) const {
        const double tau = t_lambda - t;
        return c1 * std::pow(tau, -beta) * std::exp(c2 * std::pow(tau, -alpha));
    }
};

// Location of the interior local maximum of phi: the "ghost" of the merged
// node/saddle pair, which sets the plateau level between bubbles in region C.
inline std::optional<double> ghost_plateau_level(const ModelParams& p) {
    double uprev = 1.05;
    double fprev = detail::phi_prime(uprev, p);
    for (int i = 1; i <= 2000; ++i) {
        const double u = 1.05 * std::pow(50.0 / 1.05, i / 2000.0);
        const double f = detail::phi_prime(u, p);
        if (fprev > 0.0 && f <= 0.0) {
            return detail::bisect([&](double v) { return detail::phi_prime(v, p); }, uprev, u,
                                  1e-12);
        }
        uprev = u;
        fprev = f;
    }
    return std::nullopt;
}

namespace detail {

// Last up-crossing of x = level strictly before t_limit.
inline std::optional<double> last_upcrossing_before(const Trajectory& traj, double level,
                                                    double t_limit) {
    const std::size_t n = traj.times.size();
    std::size_t iend = sample_index_at(traj, t_limit);
    if (iend >= n) iend = n - 1;
    for (std::size_t i = iend; i-- > 0;) {
        if (traj.states[i].x < level && traj.states[i + 1].x >= level) {
            return interp_x(traj, i, i + 1, level);
        }
    }
    return std::nullopt;
}

}  // namespace detail

// Fits (c1, c2) by ordinary least squares of
//   ln x + beta ln(tL - t)  against  {1, (tL - t)^{-alpha}}
// over the stored samples in the window. The default window runs from the
// last up-crossing of 1.5x the ghost plateau level to the crossing of 3x
// that level, both before tL.
inline SuperExpFit fit_superexponential(const Trajectory& traj, int peak_index = 0,
                                        std::optional<double> window_start = std::nullopt,
                                        std::optional<double> window_end = std::nullopt) {
    if (!traj.has_expansion()) {
        throw std::domain_error("fit_superexponential: need an expansion series");
    }
    const auto peaks = locate_extrema(traj, EventKind::XMax);
    if (peak_index < 0 || peak_index >= static_cast<int>(peaks.size())) {
        throw std::domain_error("fit_superexponential: no such peak");
    }
    const double t_peak = peaks[static_cast<std::size_t>(peak_index)].time;

    // tL: the expansion-exponent maximum immediately preceding the peak.
    double t_lambda = -1.0;
    for (const Event& e : traj.events) {
        if (e.kind == EventKind::LambdaMax && e.time < t_peak) t_lambda = e.time;
    }
    if (t_lambda <= 0.0) {
        throw std::domain_error("fit_superexponential: no expansion maximum before the peak");
    }

    SuperExpFit fit;
    fit.t_lambda = t_lambda;

    if (window_start && window_end) {
        fit.window_start = *window_start;
        fit.window_end = *window_end;
    } else {
        const auto ghost = ghost_plateau_level(traj.params);
        if (!ghost) {
            throw std::domain_error("fit_superexponential: no plateau (outside the critical triangle)");
        }
        const auto t0 = detail::last_upcrossing_before(traj, 1.5 * *ghost, t_lambda);
        const auto t1 = detail::last_upcrossing_before(traj, 3.0 * *ghost, t_lambda);
        if (!t0 || !t1 || !(*t1 > *t0)) {
            throw std::domain_error("fit_superexponential: could not locate the fit window");
        }
        fit.window_start = *t0;
        fit.window_end = *t1;
    }
    if (fit.window_end >= t_lambda || fit.window_start >= fit.window_end) {
        throw std::domain_error("fit_superexponential: window must end before t_lambda");
    }

    // OLS with regressors {1, tau^-alpha}.
    double s1 = 0, sx = 0, sxx = 0, sy = 0, sxy = 0;
    std::vector<std::pair<double, double>> pts;  // (tau^-alpha, y)
    for (std::size_t i = 0; i < traj.times.size(); ++i) {
        const double t = traj.times[i];
        if (t < fit.window_start || t > fit.window_end) continue;
        const double tau = t_lambda - t;
        if (!(tau > 0.0) || !(traj.states[i].x > 0.0)) continue;
        const double u = std::pow(tau, -fit.alpha);
        const double y = std::log(traj.states[i].x) + fit.beta * std::log(tau);
        pts.push_back({u, y});
        s1 += 1.0;
        sx += u;
        sxx += u * u;
        sy += y;
        sxy += u * y;
    }
    if (pts.size() < 3) {
        throw std::domain_error("fit_superexponential: too few samples in the window");
    }
    const double det = s1 * sxx - sx * sx;
    const double a = (sxx * sy - sx * sxy) / det;  // ln c1
    const double c2 = (s1 * sxy - sx * sy) / det;
    fit.c1 = std::exp(a);
    fit.c2 = c2;
    fit.n_points = static_cast<int>(pts.size());
    double ss = 0.0;
    for (const auto& [u, y] : pts) {
        const double r = y - (a + c2 * u);
        ss += r * r;
    }
    fit.rms_log_residual = std::sqrt(ss / static_cast<double>(pts.size()));
    return fit;
}

// ---------------------------------------------------------------------------
// Critical exponents
// ---------------------------------------------------------------------------

struct SlopeFit {
    double slope = 0.0;
    double stderr_ = 0.0;
};

inline SlopeFit power_law_slope(const std::vector<double>& log_x,
                                const std::vector<double>& log_y) {
    const std::size_t n = log_x.size();
    if (n != log_y.size() || n < 3) {
        throw std::domain_error("power_law_slope: need >= 3 matched points");
    }
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(log_x[i]) || !std::isfinite(log_y[i])) {
            throw std::domain_error("power_law_slope: non-finite input");
        }
        mx += log_x[i];
        my += log_y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (log_x[i] - mx) * (log_x[i] - mx);
        sxy += (log_x[i] - mx) * (log_y[i] - my);
    }
    if (sxx == 0.0) throw std::domain_error("power_law_slope: degenerate abscissa");
    SlopeFit f;
    f.slope = sxy / sxx;
    double ssr = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = log_y[i] - my - f.slope * (log_x[i] - mx);
        ssr += r * r;
    }
    f.stderr_ = std::sqrt(ssr / static_cast<double>(n - 2) / sxx);
    return f;
}

struct ExponentEstimate {
    double value = 0.0;   // the headline exponent (nu or gamma)
    double stderr_ = 0.0;
    double ols_slope = 0.0;  // raw slope of the log-log regression
    double ols_stderr = 0.0;
    int n_points = 0;
    std::vector<double> grid;      // Delta or |g| values actually used
    std::vector<double> measured;  // L or A per grid point
    std::vector<double> excluded;  // grid points that produced < 2 cycles
};

struct ExponentOptions {
    double rtol = 1e-10;
    double atol = 1e-12;
    State initial{1.0, 0.1};
    double periods_budget = 22.0;  // run length in expected periods
    int workers = 0;               // 0 = serial
};

namespace detail {

struct CycleMeasure {
    double period = 0.0;
    double amplitude = 0.0;
    int n_cycles = 0;
};

// Asymptotic period and amplitude: mean over the last 3 complete cycles.
inline CycleMeasure measure_cycles(const ModelParams& p, double t_end,
                                   const ExponentOptions& opt) {
    IntegrationConfig cfg;
    cfg.rtol = opt.rtol;
    cfg.atol = opt.atol;
    cfg.t_end = t_end;
    cfg.initial = opt.initial;
    cfg.sample_dt = t_end;  // events only; samples are not needed here
    const Trajectory traj = integrate(p, cfg);
    const auto peaks = locate_extrema(traj, EventKind::XMax);
    CycleMeasure m;
    m.n_cycles = std::max(0, static_cast<int>(peaks.size()) - 1);
    if (peaks.size() < 2) return m;
    const std::size_t last = peaks.size() - 1;
    const std::size_t first = last >= 3 ? last - 3 : 0;
    double sl = 0, sa = 0;
    for (std::size_t i = first; i < last; ++i) {
        sl += peaks[i + 1].time - peaks[i].time;
        sa += peaks[i + 1].value;
    }
    const double k = static_cast<double>(last - first);
    m.period = sl / k;
    m.amplitude = sa / k;
    return m;
}

template <class F>
std::vector<CycleMeasure> run_grid(const std::vector<F>& jobs, int workers) {
    std::vector<CycleMeasure> out(jobs.size());
    if (workers <= 1) {
        for (std::size_t i = 0; i < jobs.size(); ++i) out[i] = jobs[i]();
        return out;
    }
    std::vector<std::future<CycleMeasure>> futs;
    futs.reserve(jobs.size());
    for (const auto& j : jobs) futs.push_back(std::async(std::launch::async, j));
    for (std::size_t i = 0; i < jobs.size(); ++i) out[i] = futs[i].get();
    return out;
}

}  // namespace detail

// Period divergence L ~ Delta^-nu approaching the fold line at fixed g.
inline ExponentEstimate estimate_nu(double g, const std::vector<double>& delta_grid,
                                    const ExponentOptions& opt = {}) {
    for (double d : delta_grid) {
        if (!(d > 0.0)) throw std::domain_error("estimate_nu: all Delta must be > 0");
    }
    const double b_c = detail::bisect(
        [g](double b) { return critical_gc(b) - g; }, std::exp(-1.0) + 1e-9, 50.0, 1e-10);

    std::vector<std::function<detail::CycleMeasure()>> jobs;
    for (double d : delta_grid) {
        jobs.push_back([=]() {
            const double l_est = 3.0 / std::sqrt(d);
            const double t_end = std::max(300.0, opt.periods_budget * l_est);
            return detail::measure_cycles({b_c + d, g}, t_end, opt);
        });
    }
    const auto measures = detail::run_grid(jobs, opt.workers);

    ExponentEstimate est;
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < delta_grid.size(); ++i) {
        if (measures[i].n_cycles < 2) {
            est.excluded.push_back(delta_grid[i]);
            continue;
        }
        est.grid.push_back(delta_grid[i]);
        est.measured.push_back(measures[i].period);
        lx.push_back(std::log(delta_grid[i]));
        ly.push_back(std::log(measures[i].period));
    }
    est.n_points = static_cast<int>(est.grid.size());
    const SlopeFit f = power_law_slope(lx, ly);
    est.ols_slope = f.slope;
    est.ols_stderr = f.stderr_;
    est.value = -f.slope;
    est.stderr_ = f.stderr_;
    return est;
}

// Amplitude divergence A ~ |g|^-gamma approaching g = 0- at fixed b.
// The defining relation is a g -> 0 limit and the amplitude carries a slowly
// decaying logarithmic correction, so the headline value extrapolates the
// consecutive-pair local slopes linearly in 1/|ln|g|| to zero; the raw OLS
// slope is reported alongside.
inline ExponentEstimate estimate_gamma(double b, const std::vector<double>& g_grid,
                                       const ExponentOptions& opt = {}) {
    for (double g : g_grid) {
        if (!(g < 0.0)) throw std::domain_error("estimate_gamma: all g must be < 0");
    }
    std::vector<double> sorted = g_grid;  // ascending |g|
    std::sort(sorted.begin(), sorted.end(), std::greater<>());

    std::vector<std::function<detail::CycleMeasure()>> jobs;
    for (double g : sorted) {
        jobs.push_back([=]() { return detail::measure_cycles({b, g}, 400.0, opt); });
    }
    const auto measures = detail::run_grid(jobs, opt.workers);

    ExponentEstimate est;
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        if (measures[i].n_cycles < 2) {
            est.excluded.push_back(sorted[i]);
            continue;
        }
        est.grid.push_back(std::abs(sorted[i]));
        est.measured.push_back(measures[i].amplitude);
        lx.push_back(std::log(std::abs(sorted[i])));
        ly.push_back(std::log(measures[i].amplitude));
    }
    est.n_points = static_cast<int>(est.grid.size());
    const SlopeFit f = power_law_slope(lx, ly);
    est.ols_slope = f.slope;
    est.ols_stderr = f.stderr_;
    if (lx.size() >= 4) {
        std::vector<double> w, m;  // 1/|ln g| at pair midpoint, local slope
        for (std::size_t i = 0; i + 1 < lx.size(); ++i) {
            m.push_back((ly[i + 1] - ly[i]) / (lx[i + 1] - lx[i]));
            w.push_back(1.0 / std::abs(0.5 * (lx[i] + lx[i + 1])));
        }
        double mw = 0, mm = 0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            mw += w[i];
            mm += m[i];
        }
        mw /= static_cast<double>(w.size());
        mm /= static_cast<double>(m.size());
        double sxx = 0, sxy = 0, ssr = 0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            sxx += (w[i] - mw) * (w[i] - mw);
            sxy += (w[i] - mw) * (m[i] - mm);
        }
        const double slope = sxy / sxx;
        const double intercept = mm - slope * mw;
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double r = m[i] - intercept - slope * w[i];
            ssr += r * r;
        }
        est.value = -intercept;
        const double dof = std::max<std::size_t>(1, w.size() - 2);
        est.stderr_ = std::sqrt(ssr / static_cast<double>(dof) *
                                (1.0 / static_cast<double>(w.size()) + mw * mw / sxx));
    } else {
        est.value = -f.slope;
        est.stderr_ = f.stderr_;
    }
    return est;
}

}  // namespace bubblecycle
