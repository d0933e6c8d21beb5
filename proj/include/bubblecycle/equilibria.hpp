#pragma once

// Fixed points, stability classification, critical lines, and
// bifurcation-branch scans for the asset/bond system.
//
// Nontrivial fixed points satisfy x* = exp(b x* z*), z* = exp(g x*),
// i.e. u = x* is a root of  phi(u) = ln u - b u exp(g u)  with z* = exp(g u).

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bubblecycle/model.hpp"

namespace bubblecycle {

enum class StabilityKind {
    StableFocus,
    StableNode,
    UnstableFocus,
    UnstableNode,
    Saddle,
    Degenerate,
};

inline const char* to_string(StabilityKind k) {
    switch (k) {
        case StabilityKind::StableFocus: return "stable_focus";
        case StabilityKind::StableNode: return "stable_node";
        case StabilityKind::UnstableFocus: return "unstable_focus";
        case StabilityKind::UnstableNode: return "unstable_node";
        case StabilityKind::Saddle: return "saddle";
        case StabilityKind::Degenerate: return "degenerate";
    }
    return "?";
}

struct FixedPoint {
    State location;
    std::complex<double> lambda1;
    std::complex<double> lambda2;
    StabilityKind kind = StabilityKind::Degenerate;
    // 1..3 by descending x*, 0 for trivial points.
    int branch_index = 0;
    // Set when another root lies within 1e-6 in u (root count unreliable).
    bool near_degenerate = false;
};

enum class RegionLabel { A, B, C, D, E };

inline const char* to_string(RegionLabel r) {
    switch (r) {
        case RegionLabel::A: return "A";
        case RegionLabel::B: return "B";
        case RegionLabel::C: return "C";
        case RegionLabel::D: return "D";
        case RegionLabel::E: return "E";
    }
    return "?";
}

namespace detail {

inline constexpr double kDegenerateTol = 1e-8;
inline constexpr double kRootPolishTol = 1e-12;
inline constexpr double kNearRootSpacing = 1e-6;
inline constexpr int kScanPoints = 4096;
inline constexpr double kScanLo = 1e-3;
inline constexpr double kScanHi = 1e9;

inline double phi(double u, const ModelParams& p) {
    return std::log(u) - p.b * u * clamped_exp(p.g * u);
}

inline double phi_prime(double u, const ModelParams& p) {
    return 1.0 / u - p.b * clamped_exp(p.g * u) * (1.0 + p.g * u);
}

inline double phi_second(double u, const ModelParams& p) {
    return -1.0 / (u * u) - p.b * clamped_exp(p.g * u) * p.g * (2.0 + p.g * u);
}

// Bisection on a bracketing interval, then a few Newton polish steps.
inline double solve_phi_root(double lo, double hi, const ModelParams& p) {
    double flo = phi(lo, p);
    for (int i = 0; i < 200 && hi - lo > kRootPolishTol * lo; ++i) {
        const double mid = 0.5 * (lo + hi);
        const double fm = phi(mid, p);
        if ((fm < 0.0) == (flo < 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    double u = 0.5 * (lo + hi);
    for (int i = 0; i < 4; ++i) {
        const double d = phi_prime(u, p);
        if (d == 0.0) break;
        const double step = phi(u, p) / d;
        const double next = u - step;
        if (next <= 0.0 || !std::isfinite(next)) break;
        u = next;
        if (std::abs(step) < kRootPolishTol * u) break;
    }
    return u;
}

// Generic scalar bisection for monotone-bracketed functions.
inline double bisect(const std::function<double(double)>& f, double lo, double hi,
                     double tol = 1e-13, int iters = 200) {
    double flo = f(lo);
    double fhi = f(hi);
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    if ((flo < 0.0) == (fhi < 0.0)) {
        throw std::domain_error("bisect: no sign change in bracket");
    }
    for (int i = 0; i < iters && hi - lo > tol * std::max(1.0, std::abs(lo)); ++i) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if ((fm < 0.0) == (flo < 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

}  // namespace detail

// Roots of phi(u) on u > 0, ascending, found by sign scan on a 4096-point
// logarithmic grid over [1e-3, 1e9] plus bisection and a Newton polish.
inline std::vector<double> nontrivial_roots(const ModelParams& p) {
    if (!std::isfinite(p.b) || !std::isfinite(p.g)) {
        throw std::domain_error("nontrivial_roots: non-finite parameters");
    }
    std::vector<double> roots;
    const double llo = std::log(detail::kScanLo);
    const double lhi = std::log(detail::kScanHi);
    double uprev = detail::kScanLo;
    double fprev = detail::phi(uprev, p);
    for (int i = 1; i < detail::kScanPoints; ++i) {
        const double u = std::exp(llo + (lhi - llo) * i / (detail::kScanPoints - 1));
        const double f = detail::phi(u, p);
        if (fprev == 0.0) {
            roots.push_back(uprev);
        } else if ((f < 0.0) != (fprev < 0.0)) {
            roots.push_back(detail::solve_phi_root(uprev, u, p));
        }
        uprev = u;
        fprev = f;
    }
    return roots;
}

inline std::complex<double> make_lambda(double re, double disc_term) {
    return {re, disc_term};
}

// Characteristic exponents at a fixed point (closed form):
//   lambda_{1,2} = [b x z - 2 +- x sqrt(b z (4 g + b z))] / 2
inline std::pair<std::complex<double>, std::complex<double>>
characteristic_exponents(const ModelParams& p, const State& s) {
    require_finite(p, s, "characteristic_exponents");
    const double rx = std::abs(s.x - clamped_exp(p.b * s.x * s.z));
    const double rz = std::abs(s.z - clamped_exp(p.g * s.x));
    if (rx > 1e-8 * std::max(1.0, std::abs(s.x)) ||
        rz > 1e-8 * std::max(1.0, std::abs(s.z))) {
        throw std::invalid_argument("characteristic_exponents: not a fixed point");
    }
    const double re = 0.5 * (p.b * s.x * s.z - 2.0);
    const double disc = p.b * s.z * (4.0 * p.g + p.b * s.z);
    if (disc >= 0.0) {
        const double h = 0.5 * s.x * std::sqrt(disc);
        return {std::complex<double>(re + h, 0.0), std::complex<double>(re - h, 0.0)};
    }
    const double h = 0.5 * s.x * std::sqrt(-disc);
    return {std::complex<double>(re, h), std::complex<double>(re, -h)};
}

inline StabilityKind classify(std::complex<double> l1, std::complex<double> l2) {
    if (!std::isfinite(l1.real()) || !std::isfinite(l2.real()) ||
        !std::isfinite(l1.imag()) || !std::isfinite(l2.imag())) {
        throw std::domain_error("classify: non-finite eigenvalues");
    }
    const double tol = detail::kDegenerateTol;
    if (std::abs(l1.real()) < tol || std::abs(l2.real()) < tol) {
        return StabilityKind::Degenerate;
    }
    const bool complex_pair = std::abs(l1.imag()) > 0.0 || std::abs(l2.imag()) > 0.0;
    if (complex_pair) {
        return l1.real() < 0.0 ? StabilityKind::StableFocus : StabilityKind::UnstableFocus;
    }
    // Real pair: discriminant within tolerance of zero is also degenerate.
    if (std::abs(l1.real() - l2.real()) < tol) return StabilityKind::Degenerate;
    if ((l1.real() < 0.0) != (l2.real() < 0.0)) return StabilityKind::Saddle;
    return l1.real() < 0.0 ? StabilityKind::StableNode : StabilityKind::UnstableNode;
}

inline bool is_stable(StabilityKind k) {
    return k == StabilityKind::StableFocus || k == StabilityKind::StableNode;
}

// {0,0}, {1,0}, {0,1}; all unstable for every (b, g).
inline std::vector<FixedPoint> trivial_fixed_points(const ModelParams& p) {
    std::vector<FixedPoint> out;
    for (const State s : {State{0.0, 0.0}, State{1.0, 0.0}, State{0.0, 1.0}}) {
        const JacobianMatrix j = jacobian(p, s);
        // Triangular at all three trivial points: eigenvalues on the diagonal.
        std::complex<double> l1(std::max(j.j11, j.j22), 0.0);
        std::complex<double> l2(std::min(j.j11, j.j22), 0.0);
        FixedPoint fp;
        fp.location = s;
        fp.lambda1 = l1;
        fp.lambda2 = l2;
        fp.kind = classify(l1, l2);
        fp.branch_index = 0;
        out.push_back(fp);
    }
    return out;
}

// Nontrivial fixed points, descending in x*, classified, with branch
// indices by descending location (x1* >= x2* >= x3*). A lone stable point
// keeps index 3 (region A continuation), a lone unstable focus index 1
// (region C continuation).
inline std::vector<FixedPoint> nontrivial_fixed_points(const ModelParams& p) {
    std::vector<double> roots = nontrivial_roots(p);
    std::sort(roots.begin(), roots.end(), std::greater<>());
    std::vector<FixedPoint> out;
    for (std::size_t i = 0; i < roots.size(); ++i) {
        const double u = roots[i];
        FixedPoint fp;
        fp.location = {u, clamped_exp(p.g * u)};
        auto [l1, l2] = characteristic_exponents(p, fp.location);
        fp.lambda1 = l1;
        fp.lambda2 = l2;
        fp.kind = classify(l1, l2);
        for (std::size_t k = 0; k < roots.size(); ++k) {
            if (k != i && std::abs(roots[k] - u) < detail::kNearRootSpacing) {
                fp.near_degenerate = true;
            }
        }
        out.push_back(fp);
    }
    const bool has_stable =
        std::any_of(out.begin(), out.end(), [](const FixedPoint& f) { return is_stable(f.kind); });
    const int n = static_cast<int>(out.size());
    for (int i = 0; i < n; ++i) {
        out[i].branch_index = has_stable ? (3 - n + 1 + i) : (1 + i);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Critical lines. The fold curve (two fixed points merging) is the
// simultaneous solution of phi = 0 and phi' = 0, parameterized by the
// double-root location u:
//   g(u) = (1/ln u - 1) / u,   b(u) = ln u * exp(1 - 1/ln u) / u
// ---------------------------------------------------------------------------

struct ParamPoint {
    double b = 0.0;
    double g = 0.0;
};

inline ParamPoint fold_curve_point(double u) {
    if (!(u > 0.0) || u == 1.0) {
        throw std::domain_error("fold_curve_point: need u > 0, u != 1");
    }
    const double lu = std::log(u);
    return {lu * std::exp(1.0 - 1.0 / lu) / u, (1.0 / lu - 1.0) / u};
}

struct CuspPoint {
    double b0 = 0.0;
    double g = 0.0;
    double u = 0.0;
};

// Where phi = phi' = phi'' = 0: s = g u solves s^2 + 3 s + 1 = 0 with
// ln u = 1/(1+s), giving u = exp((1+sqrt(5))/2).
inline CuspPoint cusp_point() {
    const double s = 0.5 * (-3.0 + std::sqrt(5.0));
    const double u = std::exp(1.0 / (1.0 + s));
    const ParamPoint pp = fold_curve_point(u);
    return {pp.b, pp.g, u};
}

namespace detail {

// b(u) along the fold, increasing on (1, u_cusp), decreasing beyond.
inline double fold_b_of_u(double u) { return fold_curve_point(u).b; }

inline double invert_fold_b(double b, double ulo, double uhi) {
    return bisect([b](double u) { return fold_b_of_u(u) - b; }, ulo, uhi);
}

}  // namespace detail

// Hopf line for b >= b0: trace vanishes with an imaginary pair at
// x* = e^2, z* = 2/(b e^2), hence g = (ln 2 - 2 - ln b)/e^2.
inline double hopf_g(double b) {
    return (std::log(2.0) - 2.0 - std::log(b)) / std::exp(2.0);
}

// Outer fold branch (u > u_cusp): the A/B boundary g_0(b), defined for
// 0 < b < b0.
inline double critical_g0(double b) {
    const CuspPoint c = cusp_point();
    if (!(b > 0.0) || b >= c.b0) {
        throw std::domain_error("critical_g0: requires 0 < b < b0");
    }
    const double u = detail::invert_fold_b(b, c.u, 1e12);
    return fold_curve_point(u).g;
}

// The critical line g_c(b): inner fold branch (u < u_cusp) for b < b0,
// Hopf line for b >= b0.
inline double critical_gc(double b) {
    if (!(b > 0.0)) throw std::domain_error("critical_gc: requires b > 0");
    const CuspPoint c = cusp_point();
    if (b >= c.b0) return hopf_g(b);
    const double u = detail::invert_fold_b(b, 1.0 + 1e-12, c.u);
    return fold_curve_point(u).g;
}

// Inverse maps at fixed g < 0: the two fold crossings of a b-scan.
// b1 = g_0^{-1}(g): outer fold branch.
inline double critical_b1(double g) {
    const CuspPoint c = cusp_point();
    if (!(g < 0.0) || g <= c.g) {
        throw std::domain_error("critical_b1: requires g_cusp < g < 0");
    }
    const double u = detail::bisect(
        [g](double u) { return fold_curve_point(u).g - g; }, c.u, 1e12);
    return fold_curve_point(u).b;
}

// b2 = g_c^{-1}(g) = b_c(g): inner fold branch for g > g_cusp, Hopf
// inversion below the cusp.
inline double critical_b2(double g) {
    if (!(g < 0.0)) throw std::domain_error("critical_b2: requires g < 0");
    const CuspPoint c = cusp_point();
    if (g <= c.g) return std::exp(std::log(2.0) - 2.0 - g * std::exp(2.0));
    const double u = detail::bisect(
        [g](double u) { return fold_curve_point(u).g - g; }, std::exp(1.0), c.u);
    return fold_curve_point(u).b;
}

// Node <-> focus boundary of the stable branch: discriminant b z* = -4 g
// together with the fixed-point equations gives, with s = g x* in (-1/3, 0):
//   b(s) = -4 s e^{3s},   g(s) = s e^{4s}
inline double node_focus_boundary(double b) {
    const double bmax = 4.0 / 3.0 * std::exp(-1.0);  // b at s = -1/3
    if (!(b > 0.0) || b >= bmax) {
        throw std::domain_error("node_focus_boundary: no stable-branch solution");
    }
    const double s = detail::bisect(
        [b](double s) { return -4.0 * s * std::exp(3.0 * s) - b; }, -1.0 / 3.0, -1e-15);
    return s * std::exp(4.0 * s);
}

// Inverse form: boundary b at fixed g.
inline double node_focus_b(double g) {
    const double gmin = -0.25 * std::exp(-1.0);  // g at s = -1/4
    if (!(g < 0.0) || g <= gmin) {
        throw std::domain_error("node_focus_b: no stable-branch solution");
    }
    const double s = detail::bisect(
        [g](double s) { return s * std::exp(4.0 * s) - g; }, -0.25, -1e-15);
    return -4.0 * s * std::exp(3.0 * s);
}

struct CriticalLines {
    struct FoldSample {
        double u, b, g;
    };
    std::vector<FoldSample> fold_samples;
    std::vector<ParamPoint> hopf_samples;
    CuspPoint cusp;
    std::vector<ParamPoint> node_focus_samples;
};

inline CriticalLines critical_lines(int samples_per_branch = 256, double b_max = 2.0) {
    CriticalLines out;
    out.cusp = cusp_point();
    // Fold curve: u from just above 1 out to the far branch.
    for (int i = 0; i < samples_per_branch; ++i) {
        const double lu = 0.02 + (std::log(1e6) - 0.02) * i / (samples_per_branch - 1.0);
        const double u = std::exp(lu);
        const ParamPoint pp = fold_curve_point(u);
        out.fold_samples.push_back({u, pp.b, pp.g});
    }
    for (int i = 0; i < samples_per_branch; ++i) {
        const double b = out.cusp.b0 + (b_max - out.cusp.b0) * i / (samples_per_branch - 1.0);
        out.hopf_samples.push_back({b, hopf_g(b)});
    }
    for (int i = 1; i < samples_per_branch; ++i) {
        const double s = -1.0 / 3.0 * i / static_cast<double>(samples_per_branch);
        out.node_focus_samples.push_back({-4.0 * s * std::exp(3.0 * s), s * std::exp(4.0 * s)});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Region labels
// ---------------------------------------------------------------------------

struct RegionQuery {
    RegionLabel label = RegionLabel::E;
    bool boundary = false;  // within 1e-6 of a critical line
};

namespace detail {

inline RegionLabel region_from_census(const std::vector<FixedPoint>& pts) {
    switch (pts.size()) {
        case 0: return RegionLabel::E;
        case 1: return is_stable(pts.front().kind) ? RegionLabel::A : RegionLabel::C;
        case 2: return RegionLabel::D;
        default: return RegionLabel::B;
    }
}

inline RegionLabel region_from_inequalities(const ModelParams& p) {
    const double b0 = cusp_point().b0;
    const double inv_e = std::exp(-1.0);
    const double gc = critical_gc(p.b);
    const std::optional<double> g0 =
        p.b < b0 ? std::optional<double>(critical_g0(p.b)) : std::nullopt;
    if (p.b < b0) {
        if (p.g < *g0) return RegionLabel::A;
        if (p.b < inv_e) {
            if (p.g < 0.0) return RegionLabel::B;
            if (p.g < gc) return RegionLabel::D;
            return RegionLabel::E;
        }
        if (p.g < gc) return RegionLabel::B;
        if (p.g < 0.0) return RegionLabel::C;
        return RegionLabel::E;
    }
    if (p.g < gc) return RegionLabel::A;
    if (p.g < 0.0) return RegionLabel::C;
    return RegionLabel::E;
}

inline double distance_to_critical_lines(const ModelParams& p) {
    double d = std::abs(p.g);
    d = std::min(d, std::abs(p.g - critical_gc(p.b)));
    const double b0 = cusp_point().b0;
    if (p.b < b0) d = std::min(d, std::abs(p.g - critical_g0(p.b)));
    return d;
}

}  // namespace detail

inline RegionQuery region_label(const ModelParams& p) {
    if (!(p.b > 0.0) || !std::isfinite(p.b) || !std::isfinite(p.g)) {
        throw std::domain_error("region_label: requires finite b > 0");
    }
    RegionQuery q;
    q.boundary = detail::distance_to_critical_lines(p) < 1e-6;
    const RegionLabel census = detail::region_from_census(nontrivial_fixed_points(p));
    const RegionLabel ineq = detail::region_from_inequalities(p);
    if (census != ineq && !q.boundary) {
        // The two methods disagree away from a line only if root finding
        // slipped; trust the inequalities and report boundary.
        q.boundary = true;
    }
    q.label = ineq;
    return q;
}

// ---------------------------------------------------------------------------
// Bifurcation-branch scans (Figs. 2-6)
// ---------------------------------------------------------------------------

struct BifurcationBranch {
    bool vary_b = false;     // else vary g
    double fixed_value = 0;  // the non-varying parameter
    std::vector<double> grid;
    std::vector<std::vector<FixedPoint>> points;  // per grid value
    struct Annotation {
        std::string name;  // g0, gc, gn, b1, b2, bn, g=0, merge
        double location = 0.0;
    };
    std::vector<Annotation> annotations;
};

namespace detail {

inline ModelParams scan_params(bool vary_b, double fixed_value, double v) {
    return vary_b ? ModelParams{v, fixed_value} : ModelParams{fixed_value, v};
}

inline std::string merge_name(bool vary_b, int count_lo, int count_hi, double at,
                              double fixed_value) {
    // Name root-count changes after the critical lines they cross, matching
    // against the closed-form lines when possible.
    const double tol = 1e-3;
    try {
        if (vary_b) {
            const double g = fixed_value;
            if (g < 0.0) {
                if (std::abs(at - critical_b2(g)) < tol) return "b2";
                const CuspPoint c = cusp_point();
                if (g > c.g && std::abs(at - critical_b1(g)) < tol) return "b1";
            }
        } else {
            const double b = fixed_value;
            if (std::abs(at) < tol && count_lo != 0 && count_hi != 0) return "g=0";
            if (std::abs(at - critical_gc(b)) < tol) return "gc";
            if (b < cusp_point().b0 && std::abs(at - critical_g0(b)) < tol) return "g0";
        }
    } catch (const std::domain_error&) {
    }
    return "merge";
}

}  // namespace detail

inline BifurcationBranch bifurcation_scan(bool vary_b, double fixed_value,
                                          const std::vector<double>& grid) {
    if (grid.size() < 2 || !std::is_sorted(grid.begin(), grid.end())) {
        throw std::domain_error("bifurcation_scan: need a monotone grid of >= 2 points");
    }
    BifurcationBranch out;
    out.vary_b = vary_b;
    out.fixed_value = fixed_value;
    out.grid = grid;
    for (double v : grid) {
        out.points.push_back(nontrivial_fixed_points(detail::scan_params(vary_b, fixed_value, v)));
    }
    const auto count_at = [&](double v) {
        return static_cast<int>(
            nontrivial_roots(detail::scan_params(vary_b, fixed_value, v)).size());
    };
    const auto max_re_at = [&](double v) {
        const auto pts = nontrivial_fixed_points(detail::scan_params(vary_b, fixed_value, v));
        double m = -1e30;
        for (const auto& fp : pts) m = std::max(m, fp.lambda1.real());
        return m;
    };
    const auto stable_disc_at = [&](double v) -> std::optional<double> {
        const ModelParams p = detail::scan_params(vary_b, fixed_value, v);
        for (const auto& fp : nontrivial_fixed_points(p)) {
            if (is_stable(fp.kind) || fp.kind == StabilityKind::Degenerate) {
                return p.b * fp.location.z * (4.0 * p.g + p.b * fp.location.z);
            }
        }
        return std::nullopt;
    };
    for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
        double lo = grid[i], hi = grid[i + 1];
        const int clo = count_at(lo), chi = count_at(hi);
        if (clo != chi) {
            // Bisect the root-count change to 1e-6 in the parameter.
            double a = lo, b = hi;
            while (b - a > 1e-6) {
                const double mid = 0.5 * (a + b);
                if (count_at(mid) == clo) a = mid; else b = mid;
            }
            const double at = 0.5 * (a + b);
            out.annotations.push_back({detail::merge_name(vary_b, clo, chi, at, fixed_value), at});
            continue;
        }
        if (clo == 1 && (max_re_at(lo) < 0.0) != (max_re_at(hi) < 0.0)) {
            // Hopf crossing: stability flips without a count change.
            const double at = detail::bisect([&](double v) { return max_re_at(v); }, lo, hi, 1e-9);
            out.annotations.push_back({vary_b ? "b2" : "gc", at});
            continue;
        }
        const auto dlo = stable_disc_at(lo), dhi = stable_disc_at(hi);
        if (dlo && dhi && (*dlo < 0.0) != (*dhi < 0.0)) {
            const double at = detail::bisect(
                [&](double v) { return stable_disc_at(v).value_or(0.0); }, lo, hi, 1e-9);
            out.annotations.push_back({vary_b ? "bn" : "gn", at});
        }
    }
    return out;
}

}  // namespace bubblecycle
