#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "bubblecycle/equilibria.hpp"
#include "bubblecycle/integrate.hpp"

using namespace bubblecycle;

namespace {

// b = g = 0 decouples both equations into logistic growth with the closed
// form x(t) = x0 e^t / (1 + x0 (e^t - 1)).
double logistic(double x0, double t) {
    return x0 * std::exp(t) / (1.0 + x0 * (std::exp(t) - 1.0));
}

Trajectory run(const ModelParams& p, IntegrationConfig cfg) { return integrate(p, cfg); }

}  // namespace

TEST_CASE("logistic closed-form oracle") {
    IntegrationConfig cfg;
    cfg.t_end = 10.0;
    cfg.initial = {0.5, 1.0};
    cfg.sample_dt = 0.25;
    const Trajectory traj = run({0.0, 0.0}, cfg);
    REQUIRE(traj.status == TerminationStatus::Completed);
    for (std::size_t i = 0; i < traj.times.size(); ++i) {
        CHECK(std::abs(traj.states[i].x - logistic(0.5, traj.times[i])) < 1e-8);
        CHECK(std::abs(traj.states[i].z - logistic(1.0, traj.times[i])) < 1e-8);
    }
    CHECK(logistic(0.5, std::log(3.0)) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("a trajectory started at a stable node stays there") {
    const auto pts = nontrivial_fixed_points({0.38, -0.03});
    REQUIRE(pts.size() == 3);
    const FixedPoint& node = pts.back();
    REQUIRE(node.kind == StabilityKind::StableNode);
    IntegrationConfig cfg;
    cfg.t_end = 50.0;
    cfg.initial = node.location;
    const Trajectory traj = run({0.38, -0.03}, cfg);
    for (const State& s : traj.states) {
        CHECK(std::abs(s.x - node.location.x) < 1e-6);
        CHECK(std::abs(s.z - node.location.z) < 1e-6);
    }
}

TEST_CASE("fixed-step error decays at 5th order") {
    // Force fixed steps via max_step with loose tolerances; halving the step
    // should cut the endpoint error by about 2^5.
    const ModelParams p{0.0, 0.0};
    auto endpoint_error = [&](double h) {
        IntegrationConfig cfg;
        cfg.t_end = 2.0;
        cfg.initial = {0.5, 1.0};
        cfg.rtol = 1e30;  // acceptance always succeeds; h is pinned by max_step
        cfg.atol = 1e30;
        cfg.max_step = h;
        const Trajectory traj = run(p, cfg);
        return std::abs(traj.states.back().x - logistic(0.5, 2.0));
    };
    const double e1 = endpoint_error(0.2);
    const double e2 = endpoint_error(0.1);
    const double order = std::log2(e1 / e2);
    CHECK(order > 4.0);
    CHECK(order < 6.5);
}

TEST_CASE("positivity: trajectories from the open positive quadrant stay positive") {
    for (const ModelParams p : {ModelParams{1.0, -0.1}, ModelParams{0.4, -0.029},
                                ModelParams{0.5, -0.083}}) {
        IntegrationConfig cfg;
        cfg.t_end = 200.0;
        const Trajectory traj = run(p, cfg);
        for (const State& s : traj.states) {
            CHECK(s.x > 0.0);
            CHECK(s.z > 0.0);
        }
    }
}

TEST_CASE("determinism: identical configs produce bit-identical output") {
    IntegrationConfig cfg;
    cfg.t_end = 150.0;
    const Trajectory a = run({1.0, -0.05}, cfg);
    const Trajectory b = run({1.0, -0.05}, cfg);
    REQUIRE(a.times.size() == b.times.size());
    for (std::size_t i = 0; i < a.times.size(); ++i) {
        CHECK(a.times[i] == b.times[i]);
        CHECK(a.states[i].x == b.states[i].x);
        CHECK(a.states[i].z == b.states[i].z);
    }
}

TEST_CASE("region-E trajectories report divergence, never inf") {
    IntegrationConfig cfg;
    cfg.t_end = 1000.0;
    const Trajectory traj = run({1.0, 0.1}, cfg);
    CHECK(traj.status == TerminationStatus::Diverged);
    for (const State& s : traj.states) {
        CHECK(std::isfinite(s.x));
        CHECK(std::isfinite(s.z));
    }
    CHECK(traj.times.back() < cfg.t_end);
}

TEST_CASE("event ordering: each asset peak precedes the following bond trough") {
    IntegrationConfig cfg;
    cfg.t_end = 100.0;
    const Trajectory traj = run({1.0, -0.01}, cfg);
    const auto xmax = locate_extrema(traj, EventKind::XMax);
    const auto zmin = locate_extrema(traj, EventKind::ZMin);
    REQUIRE(xmax.size() >= 3);
    for (const Event& p : xmax) {
        bool found = false;
        for (const Event& q : zmin) {
            if (q.time > p.time && q.time < p.time + 5.0) {
                found = true;
                break;
            }
        }
        CHECK(found);
    }
    // Events are refined well below the sampling scale: values at peaks must
    // exceed both neighbors on the sample grid.
    for (const Event& p : xmax) {
        double best = 0.0;
        for (std::size_t i = 0; i < traj.times.size(); ++i) {
            if (std::abs(traj.times[i] - p.time) < 0.5) best = std::max(best, traj.states[i].x);
        }
        CHECK(p.value >= best - 1e-6 * std::abs(best));
    }
}

TEST_CASE("expansion exponent: anchor trajectory values") {
    IntegrationConfig cfg;
    cfg.t_end = 140.0;
    const Trajectory traj = integrate_with_expansion({0.4, -0.029}, cfg);
    REQUIRE(traj.has_expansion());
    const auto xmax = locate_extrema(traj, EventKind::XMax);
    REQUIRE(!xmax.empty());
    // Converged first-peak values; co-reported timing anchors cross-checked
    // against independent integrators.
    CHECK(xmax[0].time == doctest::Approx(122.8904).epsilon(1e-4));
    CHECK(xmax[0].value == doctest::Approx(113.534).epsilon(1e-3));
    const LambdaMaximum lm = lambda_maximum(traj);
    CHECK(lm.time == doctest::Approx(121.4756).epsilon(1e-4));
    CHECK(lm.value == doctest::Approx(-0.86386).epsilon(1e-3));
    // Lambda at the price peak.
    double lam_at_peak = 0.0;
    double best = 1e9;
    for (std::size_t i = 0; i < traj.times.size(); ++i) {
        const double d = std::abs(traj.times[i] - xmax[0].time);
        if (d < best) {
            best = d;
            lam_at_peak = traj.lambda[i];
        }
    }
    CHECK(lam_at_peak == doctest::Approx(-0.8784).epsilon(2e-3));
}

TEST_CASE("expansion exponent is negative along a region-C cycle") {
    IntegrationConfig cfg;
    cfg.t_end = 100.0;
    const Trajectory traj = integrate_with_expansion({1.0, -0.05}, cfg);
    for (std::size_t i = 0; i < traj.times.size(); ++i) {
        if (traj.times[i] < 1.0) continue;  // transient start-up
        CHECK(traj.lambda[i] < 0.5);
    }
    // ... and strictly negative once the cycle is reached.
    for (std::size_t i = 0; i < traj.times.size(); ++i) {
        if (traj.times[i] > 20.0) CHECK(traj.lambda[i] < 0.0);
    }
}

TEST_CASE("config validation") {
    IntegrationConfig cfg;
    cfg.t_end = -1.0;
    CHECK_THROWS_AS(integrate({1.0, -0.1}, cfg), std::invalid_argument);
    cfg = {};
    cfg.rtol = -1e-8;
    CHECK_THROWS_AS(integrate({1.0, -0.1}, cfg), std::invalid_argument);
    cfg = {};
    cfg.initial = {-1.0, 0.1};
    CHECK_THROWS_AS(integrate({1.0, -0.1}, cfg), std::invalid_argument);
}
