#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "bubblecycle/bubbles.hpp"

using namespace bubblecycle;

namespace {

// Triangle-wave trajectory: exact widths under linear interpolation.
Trajectory triangle_train(int n_peaks, double period, double amp, double base) {
    Trajectory traj;
    traj.params = {1.0, -0.1};
    const double dt = period / 200.0;
    const double t_end = n_peaks * period + period;
    for (double t = 0.0; t <= t_end + 1e-12; t += dt) {
        const double phase = std::fmod(t, period);
        const double half = period / 2.0;
        const double x =
            phase <= half ? base + (amp - base) * phase / half
                          : amp - (amp - base) * (phase - half) / half;
        traj.times.push_back(t);
        traj.states.push_back({x, 1.0});
    }
    for (int k = 0; k < n_peaks; ++k) {
        const double tp = k * period + period / 2.0;
        traj.events.push_back({EventKind::XMax, tp, amp});
        traj.events.push_back({EventKind::ZMin, tp + 0.7, 0.5});
    }
    return traj;
}

}  // namespace

TEST_CASE("bubble detection on a synthetic triangle train is exact") {
    const double period = 10.0, amp = 5.0, base = 0.1;
    const Trajectory traj = triangle_train(5, period, amp, base);
    const auto events = detect_bubbles(traj, TransientPolicy::none());
    REQUIRE(events.size() == 5);
    // FWHM at A/2 of a symmetric triangle: 2 * half * (amp/2) / (amp - base).
    const double expect_w = period * (amp / 2.0) / (amp - base);
    for (const auto& e : events) {
        CHECK(e.amplitude == doctest::Approx(amp).epsilon(1e-12));
        CHECK(e.width == doctest::Approx(expect_w).epsilon(1e-10));
        CHECK(e.lag == doctest::Approx(0.7).epsilon(1e-12));
    }
    for (std::size_t i = 1; i < events.size(); ++i) {
        CHECK(events[i].period_prev == doctest::Approx(period).epsilon(1e-12));
    }
    const BubbleStats stats = bubble_stats(events);
    CHECK(stats.count == 5);
    CHECK(stats.mean_period == doctest::Approx(period).epsilon(1e-12));
    CHECK(stats.ratio_r == doctest::Approx(expect_w / period).epsilon(1e-10));
}

TEST_CASE("absolute transient cutoff drops early peaks") {
    const Trajectory traj = triangle_train(5, 10.0, 5.0, 0.1);
    const auto events = detect_bubbles(traj, TransientPolicy::cutoff(21.0));
    REQUIRE(events.size() == 3);
    CHECK(events.front().t_peak > 21.0);
}

TEST_CASE("power-law slope: exact line and error handling") {
    std::vector<double> x = {0.0, 1.0, 2.0, 3.0}, y;
    for (double v : x) y.push_back(2.5 * v - 1.0);
    const SlopeFit f = power_law_slope(x, y);
    CHECK(f.slope == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(f.stderr_ < 1e-10);
    CHECK_THROWS_AS(power_law_slope({1.0, 1.0, 1.0}, {1.0, 2.0, 3.0}), std::domain_error);
    CHECK_THROWS_AS(power_law_slope({1.0, 2.0}, {1.0, 2.0}), std::domain_error);
}

TEST_CASE("super-exponential fit recovers exact synthetic coefficients") {
    const double c1 = 2.0, c2 = 3.0, tl = 10.0, alpha = 0.4, beta = 0.2;
    Trajectory traj;
    traj.params = {0.4, -0.029};
    for (double t = 0.0; t <= 9.5; t += 0.01) {
        const double tau = tl - t;
        const double x = c1 * std::pow(tau, -beta) * std::exp(c2 * std::pow(tau, -alpha));
        traj.times.push_back(t);
        traj.states.push_back({x, 1.0});
        traj.lambda.push_back(-0.5);
    }
    traj.events.push_back({EventKind::LambdaMax, tl, -0.1});
    traj.events.push_back({EventKind::XMax, tl + 0.2, 1e3});
    const SuperExpFit fit = fit_superexponential(traj, 0, 7.0, 9.4);
    CHECK(fit.c1 == doctest::Approx(c1).epsilon(1e-8));
    CHECK(fit.c2 == doctest::Approx(c2).epsilon(1e-8));
    CHECK(fit.rms_log_residual < 1e-10);
    CHECK(fit.t_lambda == doctest::Approx(tl).epsilon(1e-12));
}

TEST_CASE("fit window must close before the singularity") {
    Trajectory traj;
    traj.params = {0.4, -0.029};
    traj.times = {0.0, 1.0, 2.0};
    traj.states = {{1, 1}, {2, 1}, {3, 1}};
    traj.lambda = {-1, -1, -1};
    traj.events.push_back({EventKind::LambdaMax, 2.5, -0.1});
    traj.events.push_back({EventKind::XMax, 2.6, 5.0});
    CHECK_THROWS_AS(fit_superexponential(traj, 0, 1.0, 3.0), std::domain_error);
    CHECK_THROWS_AS(fit_superexponential(traj, 3), std::domain_error);
}

TEST_CASE("ghost plateau level sits at an interior maximum of phi") {
    const ModelParams p{0.4, -0.029};
    const auto u = ghost_plateau_level(p);
    REQUIRE(u.has_value());
    CHECK(*u > 1.5);
    CHECK(*u < 10.0);
    auto phi = [&](double v) { return std::log(v) - p.b * v * std::exp(p.g * v); };
    const double h = 1e-5;
    CHECK(std::abs((phi(*u + h) - phi(*u - h)) / (2 * h)) < 1e-7);
    CHECK(phi(*u) > phi(*u + 0.3));
    CHECK(phi(*u) > phi(*u - 0.3));
    // Deep in region A the interior maximum is positive (two more roots), in
    // region C it must be negative (ghost only).
    CHECK(phi(*u) < 0.0);
}

TEST_CASE("super-exponential fit anchor: b=0.4, g=-0.029") {
    IntegrationConfig cfg;
    cfg.t_end = 140.0;
    cfg.sample_dt = 0.01;
    const Trajectory traj = integrate_with_expansion({0.4, -0.029}, cfg);
    const SuperExpFit fit = fit_superexponential(traj);
    CHECK(fit.c1 == doctest::Approx(2.633).epsilon(0.01));
    CHECK(fit.c2 == doctest::Approx(1.521).epsilon(0.01));
    CHECK(fit.rms_log_residual < 0.05);
    CHECK(fit.t_lambda == doctest::Approx(121.4756).epsilon(1e-4));
}

TEST_CASE("Table 1 rows via the library") {
    IntegrationConfig cfg;
    cfg.t_end = 100.0;

    const Trajectory near_hopf = integrate({1.0, -0.1768}, cfg);
    const auto ev1 = detect_bubbles(near_hopf, TransientPolicy::none());
    CHECK(ev1.size() == 19);
    CHECK(ev1.front().amplitude == doctest::Approx(11.5).epsilon(0.01));
    CHECK(ev1.front().width == doctest::Approx(2.52).epsilon(0.02));

    const Trajectory spiky = integrate({1.0, -1e-5}, cfg);
    const auto ev2 = detect_bubbles(spiky, TransientPolicy::none());
    CHECK(ev2.size() == 4);
    CHECK(ev2.front().amplitude == doctest::Approx(1.4e6).epsilon(0.05));
    CHECK(ev2.front().width == doctest::Approx(0.72).epsilon(0.05));
    // Genuine-bubble regime: width is a small fraction of the period.
    const BubbleStats s2 = bubble_stats(ev2);
    CHECK(s2.ratio_r < 0.05);
}

TEST_CASE("period-convergence policy keeps only the settled cycle") {
    IntegrationConfig cfg;
    cfg.t_end = 100.0;
    const Trajectory traj = integrate({1.0, -0.1}, cfg);
    const auto events = detect_bubbles(traj);
    REQUIRE(events.size() >= 3);
    const double l1 = events[1].period_prev;
    const double l_last = events.back().period_prev;
    CHECK(std::abs(l1 - l_last) < 0.01 * l_last);
}

TEST_CASE("asymptotic cycle is independent of the initial condition") {
    auto measure = [](State init) {
        IntegrationConfig cfg;
        cfg.t_end = 300.0;
        cfg.initial = init;
        const Trajectory traj = integrate({1.0, -0.05}, cfg);
        const auto events = detect_bubbles(traj);
        const BubbleStats s = bubble_stats(events);
        return std::pair<double, double>{s.mean_period, s.mean_amplitude};
    };
    const auto [l1, a1] = measure({1.0, 0.1});
    const auto [l2, a2] = measure({5.0, 0.7});
    CHECK(std::abs(l1 - l2) < 0.01 * l1);
    CHECK(std::abs(a1 - a2) < 0.01 * a1);
}

TEST_CASE("nu estimate on a coarse grid") {
    std::vector<double> deltas;
    for (int i = 0; i < 4; ++i) deltas.push_back(1e-3 * std::pow(10.0, i / 3.0));
    ExponentOptions opt;
    opt.workers = 4;
    const ExponentEstimate est = estimate_nu(-0.03, deltas, opt);
    CHECK(est.n_points == 4);
    CHECK(est.value == doctest::Approx(0.5).epsilon(0.15));
    CHECK_THROWS_AS(estimate_nu(-0.03, {0.0, 1e-3}, opt), std::domain_error);
}

TEST_CASE("gamma estimate on a coarse grid") {
    std::vector<double> gs;
    for (int i = 0; i <= 4; ++i) gs.push_back(-std::pow(10.0, -2.0 - i));
    ExponentOptions opt;
    opt.workers = 4;
    const ExponentEstimate est = estimate_gamma(1.0, gs, opt);
    CHECK(est.value == doctest::Approx(1.0).epsilon(0.05));
    // The raw OLS slope keeps the logarithmic correction.
    CHECK(-est.ols_slope > 1.05);
    CHECK_THROWS_AS(estimate_gamma(1.0, {0.1, -0.1}, opt), std::domain_error);
}
