// bubblecycle: command-line front end. Every subcommand turns one analysis
// into a deterministic CSV/JSON artifact; sweeps fan out across workers but
// always emit in grid order.

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <future>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "bubblecycle/bubbles.hpp"
#include "bubblecycle/equilibria.hpp"
#include "bubblecycle/integrate.hpp"
#include "bubblecycle/io.hpp"
#include "bubblecycle/model.hpp"

namespace bc = bubblecycle;
using nlohmann::json;

namespace {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Ties each CLI option to a JSON config key: a value from --config applies
// only when the flag was not given, and unknown keys are rejected.
class OptBinder {
public:
    explicit OptBinder(CLI::App* app) : app_(app) {
        config_opt_ = app->add_option("--config", config_path_,
                                      "JSON config file; explicit flags override it");
    }

    template <class T>
    CLI::Option* add(const std::string& flag, T& var, const std::string& desc) {
        CLI::Option* o = app_->add_option(flag, var, desc);
        const std::string key = flag.substr(2);
        entries_[key] = {o, [&var](const json& v) { var = v.get<T>(); },
                         [&var]() { return json(var); }};
        return o;
    }

    CLI::Option* add_flag(const std::string& flag, bool& var, const std::string& desc) {
        CLI::Option* o = app_->add_flag(flag, var, desc);
        const std::string key = flag.substr(2);
        entries_[key] = {o, [&var](const json& v) { var = v.get<bool>(); },
                         [&var]() { return json(var); }};
        return o;
    }

    // Call at the start of the subcommand callback.
    void finalize() {
        if (config_path_.empty()) return;
        std::ifstream is(config_path_);
        if (!is) throw ConfigError("cannot read config file: " + config_path_);
        json cfg;
        try {
            cfg = json::parse(is);
        } catch (const json::parse_error& e) {
            throw ConfigError(std::string("config parse error: ") + e.what());
        }
        if (!cfg.is_object()) throw ConfigError("config must be a JSON object");
        for (const auto& [key, value] : cfg.items()) {
            const auto it = entries_.find(key);
            if (it == entries_.end()) throw ConfigError("unknown config key: " + key);
            try {
                if (it->second.opt->count() == 0) it->second.set(value);
            } catch (const json::exception& e) {
                throw ConfigError("config key '" + key + "': " + e.what());
            }
        }
    }

    json echo() const {
        json j;
        for (const auto& [key, e] : entries_) j[key] = e.get();
        return j;
    }

private:
    struct Entry {
        CLI::Option* opt;
        std::function<void(const json&)> set;
        std::function<json()> get;
    };
    CLI::App* app_;
    CLI::Option* config_opt_;
    std::string config_path_;
    std::map<std::string, Entry> entries_;
};

void require_finite_flag(double v, const char* name) {
    if (!std::isfinite(v)) throw ConfigError(std::string(name) + " must be finite");
}

int resolve_workers(int flag_value, bool flag_given) {
    if (flag_given) return std::max(1, flag_value);
    if (const char* env = std::getenv("BUBBLECYCLE_WORKERS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v >= 1) return static_cast<int>(v);
    }
    return 1;
}

// Runs jobs across `workers` threads, returning results in job order.
template <class T>
std::vector<T> run_ordered(const std::vector<std::function<T()>>& jobs, int workers) {
    std::vector<T> out(jobs.size());
    if (workers <= 1) {
        for (std::size_t i = 0; i < jobs.size(); ++i) out[i] = jobs[i]();
        return out;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    const int n = std::min<int>(workers, static_cast<int>(jobs.size()));
    for (int w = 0; w < n; ++w) {
        pool.emplace_back([&]() {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= jobs.size()) return;
                out[i] = jobs[i]();
            }
        });
    }
    for (auto& t : pool) t.join();
    return out;
}

void emit(const std::string& out, const std::string& body) {
    if (out.empty()) {
        std::cout << body;
        return;
    }
    try {
        bc::write_text_file(out, body);
    } catch (const std::runtime_error& e) {
        throw IoError(e.what());
    }
}

std::vector<double> linspace(double lo, double hi, int n) {
    if (n < 2 || !(hi > lo)) throw ConfigError("grid needs n >= 2 and max > min");
    std::vector<double> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1.0);
    return v;
}

bc::TimeWindow parse_window(const std::string& s) {
    if (s.empty()) return {};
    const auto colon = s.find(':');
    if (colon == std::string::npos) throw ConfigError("--window expects t0:t1");
    try {
        bc::TimeWindow w;
        w.t0 = std::stod(s.substr(0, colon));
        w.t1 = std::stod(s.substr(colon + 1));
        if (!(w.t1 > w.t0)) throw ConfigError("--window needs t1 > t0");
        return w;
    } catch (const std::invalid_argument&) {
        throw ConfigError("--window expects numeric t0:t1");
    }
}

struct SimFlags {
    double b = 1.0, g = -0.1, x0 = 1.0, z0 = 0.1;
    double t_end = 1000.0, rtol = 1e-10, atol = 1e-12, sample_dt = 0.0;
    std::string out, format = "csv";

    void bind(OptBinder& bind) {
        bind.add("--b", b, "fundamental log-price rate b");
        bind.add("--g", g, "log-discount rate g");
        bind.add("--x0", x0, "initial asset price");
        bind.add("--z0", z0, "initial bond price");
        bind.add("--t-end", t_end, "integration horizon");
        bind.add("--rtol", rtol, "relative tolerance");
        bind.add("--atol", atol, "absolute tolerance");
        bind.add("--sample-dt", sample_dt, "output grid spacing (0 = accepted steps)");
        bind.add("--out", out, "output path (default stdout)");
        bind.add("--format", format, "csv or json");
    }

    void validate() const {
        require_finite_flag(b, "--b");
        require_finite_flag(g, "--g");
        require_finite_flag(x0, "--x0");
        require_finite_flag(z0, "--z0");
        require_finite_flag(t_end, "--t-end");
        if (format != "csv" && format != "json") throw ConfigError("--format must be csv or json");
    }

    bc::IntegrationConfig integration(bool expansion = false) const {
        bc::IntegrationConfig c;
        c.rtol = rtol;
        c.atol = atol;
        c.t_end = t_end;
        c.initial = {x0, z0};
        c.sample_dt = sample_dt;
        c.with_expansion = expansion;
        try {
            bc::validate(c);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
        return c;
    }
};

json events_json(const bc::Trajectory& traj) {
    json ev = json::array();
    for (const auto& e : traj.events) ev.push_back(bc::to_json(e));
    return ev;
}

const char* status_str(const bc::Trajectory& traj) {
    return traj.status == bc::TerminationStatus::Diverged ? "diverged" : "completed";
}

// --- simulate ---------------------------------------------------------------

int cmd_simulate(const SimFlags& f, bool expansion, const json& echo) {
    f.validate();
    const bc::Trajectory traj = bc::integrate({f.b, f.g}, f.integration(expansion));

    if (f.format == "json") {
        json payload;
        payload["status"] = status_str(traj);
        payload["t"] = traj.times;
        json xs = json::array(), zs = json::array();
        for (const auto& s : traj.states) {
            xs.push_back(s.x);
            zs.push_back(s.z);
        }
        payload["x"] = std::move(xs);
        payload["z"] = std::move(zs);
        if (traj.has_expansion()) payload["lambda"] = traj.lambda;
        payload["events"] = events_json(traj);
        emit(f.out, bc::make_envelope(echo, "trajectory", payload).dump(2) + "\n");
        return 0;
    }

    std::ostringstream os;
    bc::CsvWriter csv(os);
    csv.field("t").field("x").field("z");
    if (traj.has_expansion()) csv.field("lambda");
    csv.endrow();
    for (std::size_t i = 0; i < traj.times.size(); ++i) {
        csv.field(traj.times[i]).field(traj.states[i].x).field(traj.states[i].z);
        if (traj.has_expansion()) csv.field(traj.lambda[i]);
        csv.endrow();
    }
    emit(f.out, os.str());
    if (!f.out.empty()) {
        json side;
        side["status"] = status_str(traj);
        side["events"] = events_json(traj);
        emit(f.out + ".events.json", side.dump(2) + "\n");
    } else if (traj.status == bc::TerminationStatus::Diverged) {
        std::cerr << "status: diverged\n";
    }
    return 0;
}

// --- fixed-points -----------------------------------------------------------

int cmd_fixed_points(double b, double g, const std::string& out, const std::string& format,
                     const json& echo) {
    require_finite_flag(b, "--b");
    require_finite_flag(g, "--g");
    const bc::ModelParams p{b, g};
    const auto trivial = bc::trivial_fixed_points(p);
    const auto nontrivial = bc::nontrivial_fixed_points(p);

    if (format == "csv") {
        std::ostringstream os;
        bc::CsvWriter csv(os);
        csv.field("x").field("z").field("re_lambda1").field("im_lambda1")
            .field("re_lambda2").field("im_lambda2").field("kind").field("branch")
            .field("trivial");
        csv.endrow();
        auto row = [&](const bc::FixedPoint& fp, int triv) {
            csv.field(fp.location.x).field(fp.location.z)
                .field(fp.lambda1.real()).field(fp.lambda1.imag())
                .field(fp.lambda2.real()).field(fp.lambda2.imag())
                .field(std::string(bc::to_string(fp.kind))).field(fp.branch_index).field(triv);
            csv.endrow();
        };
        for (const auto& fp : trivial) row(fp, 1);
        for (const auto& fp : nontrivial) row(fp, 0);
        emit(out, os.str());
        return 0;
    }

    json payload;
    if (p.b > 0.0) {
        const bc::RegionQuery q = bc::region_label(p);
        payload["region"] = bc::to_string(q.label);
        payload["boundary"] = q.boundary;
    } else {
        payload["region"] = nullptr;
        payload["boundary"] = false;
    }
    payload["trivial"] = json::array();
    payload["nontrivial"] = json::array();
    for (const auto& fp : trivial) payload["trivial"].push_back(bc::to_json(fp));
    for (const auto& fp : nontrivial) payload["nontrivial"].push_back(bc::to_json(fp));
    emit(out, bc::make_envelope(echo, "fixed_points", payload).dump(2) + "\n");
    return 0;
}

// --- region-map -------------------------------------------------------------

json critical_lines_json() {
    const bc::CriticalLines lines = bc::critical_lines();
    json j;
    j["fold"] = json::array();
    for (const auto& s : lines.fold_samples) j["fold"].push_back({{"b", s.b}, {"g", s.g}});
    j["hopf"] = json::array();
    for (const auto& s : lines.hopf_samples) j["hopf"].push_back({{"b", s.b}, {"g", s.g}});
    j["node_focus"] = json::array();
    for (const auto& s : lines.node_focus_samples)
        j["node_focus"].push_back({{"b", s.b}, {"g", s.g}});
    j["cusp"] = {{"b", lines.cusp.b0}, {"g", lines.cusp.g}};
    j["inv_e"] = {{"b", std::exp(-1.0)}, {"g", 0.0}};
    return j;
}

std::string critical_lines_csv() {
    const bc::CriticalLines lines = bc::critical_lines();
    std::ostringstream os;
    bc::CsvWriter csv(os);
    csv.field("line").field("b").field("g");
    csv.endrow();
    for (const auto& s : lines.fold_samples) {
        csv.field("fold").field(s.b).field(s.g);
        csv.endrow();
    }
    for (const auto& s : lines.hopf_samples) {
        csv.field("hopf").field(s.b).field(s.g);
        csv.endrow();
    }
    for (const auto& s : lines.node_focus_samples) {
        csv.field("node_focus").field(s.b).field(s.g);
        csv.endrow();
    }
    csv.field("cusp").field(lines.cusp.b0).field(lines.cusp.g);
    csv.endrow();
    csv.field("inv_e").field(std::exp(-1.0)).field(0.0);
    csv.endrow();
    return os.str();
}

int cmd_region_map(double b_min, double b_max, double g_min, double g_max, int nb, int ng,
                   const std::string& out, const std::string& format, int workers,
                   const json& echo) {
    if (!(b_min > 0.0)) throw ConfigError("--b-min must be > 0");
    const std::vector<double> bs = linspace(b_min, b_max, nb);
    const std::vector<double> gs = linspace(g_min, g_max, ng);

    std::vector<std::function<std::vector<bc::RegionLabel>()>> jobs;
    for (double b : bs) {
        jobs.push_back([b, &gs]() {
            std::vector<bc::RegionLabel> row;
            row.reserve(gs.size());
            for (double g : gs) row.push_back(bc::region_label({b, g}).label);
            return row;
        });
    }
    const auto rows = run_ordered(jobs, workers);

    if (format == "json") {
        json grid = json::array();
        for (std::size_t i = 0; i < bs.size(); ++i) {
            for (std::size_t k = 0; k < gs.size(); ++k) {
                grid.push_back({{"b", bs[i]}, {"g", gs[k]}, {"region", bc::to_string(rows[i][k])}});
            }
        }
        json payload;
        payload["grid"] = std::move(grid);
        payload["lines"] = critical_lines_json();
        emit(out, bc::make_envelope(echo, "region_map", payload).dump(2) + "\n");
        return 0;
    }

    std::ostringstream os;
    bc::CsvWriter csv(os);
    csv.field("b").field("g").field("region");
    csv.endrow();
    for (std::size_t i = 0; i < bs.size(); ++i) {
        for (std::size_t k = 0; k < gs.size(); ++k) {
            csv.field(bs[i]).field(gs[k]).field(std::string(bc::to_string(rows[i][k])));
            csv.endrow();
        }
    }
    emit(out, os.str());
    if (!out.empty()) emit(out + ".lines.csv", critical_lines_csv());
    return 0;
}

// --- bifurcation ------------------------------------------------------------

int cmd_bifurcation(const std::string& vary, double fixed_value, double lo, double hi, int n,
                    const std::string& out, const std::string& format, const json& echo) {
    if (vary != "b" && vary != "g") throw ConfigError("--vary must be b or g");
    require_finite_flag(fixed_value, "--fixed");
    const bool vary_b = vary == "b";
    const bc::BifurcationBranch br = bc::bifurcation_scan(vary_b, fixed_value, linspace(lo, hi, n));

    json ann = json::array();
    for (const auto& a : br.annotations) ann.push_back({{"name", a.name}, {"at", a.location}});

    if (format == "json") {
        json pts = json::array();
        for (std::size_t i = 0; i < br.grid.size(); ++i) {
            for (const auto& fp : br.points[i]) {
                json j = bc::to_json(fp);
                j["param"] = br.grid[i];
                pts.push_back(std::move(j));
            }
        }
        json payload;
        payload["vary"] = vary;
        payload["fixed"] = fixed_value;
        payload["points"] = std::move(pts);
        payload["annotations"] = std::move(ann);
        emit(out, bc::make_envelope(echo, "bifurcation", payload).dump(2) + "\n");
        return 0;
    }

    std::ostringstream os;
    bc::CsvWriter csv(os);
    csv.field("param").field("x_star").field("z_star").field("kind").field("branch");
    csv.endrow();
    for (std::size_t i = 0; i < br.grid.size(); ++i) {
        for (const auto& fp : br.points[i]) {
            csv.field(br.grid[i]).field(fp.location.x).field(fp.location.z)
                .field(std::string(bc::to_string(fp.kind))).field(fp.branch_index);
            csv.endrow();
        }
    }
    emit(out, os.str());
    if (!out.empty()) {
        emit(out + ".annotations.json", json({{"annotations", ann}}).dump(2) + "\n");
    }
    return 0;
}

// --- bubbles ----------------------------------------------------------------

int cmd_bubbles(const SimFlags& f, const std::string& window, double transient_cutoff,
                bool raw, const json& echo) {
    f.validate();
    const bc::Trajectory traj = bc::integrate({f.b, f.g}, f.integration());
    if (traj.status == bc::TerminationStatus::Diverged) {
        throw std::domain_error("bubbles: trajectory diverged; no cycle to analyze");
    }

    bc::TransientPolicy policy;
    if (raw) policy = bc::TransientPolicy::none();
    if (transient_cutoff >= 0.0) policy = bc::TransientPolicy::cutoff(transient_cutoff);
    auto events = bc::detect_bubbles(traj, policy);
    const bc::TimeWindow w = parse_window(window);
    std::erase_if(events, [&](const bc::BubbleEvent& e) {
        return e.t_peak < w.t0 || e.t_peak > w.t1;
    });
    const bc::BubbleStats stats = bc::bubble_stats(events);

    if (f.format == "json") {
        json payload;
        payload["events"] = json::array();
        for (const auto& e : events) payload["events"].push_back(bc::to_json(e));
        payload["stats"] = bc::to_json(stats);
        emit(f.out, bc::make_envelope(echo, "bubbles", payload).dump(2) + "\n");
        return 0;
    }

    std::ostringstream os;
    bc::CsvWriter csv(os);
    csv.field("index").field("t_peak").field("amplitude").field("width").field("t_zmin")
        .field("lag").field("period_prev");
    csv.endrow();
    for (const auto& e : events) {
        csv.field(e.index).field(e.t_peak).field(e.amplitude).field(e.width)
            .field(e.t_zmin).field(e.lag).field(e.period_prev);
        csv.endrow();
    }
    emit(f.out, os.str());
    if (!f.out.empty()) {
        emit(f.out + ".stats.json", bc::to_json(stats).dump(2) + "\n");
    }
    return 0;
}

// --- fit --------------------------------------------------------------------

int cmd_fit(const SimFlags& f, const std::string& window, int peak_index, const json& echo) {
    f.validate();
    const bc::Trajectory traj = bc::integrate_with_expansion({f.b, f.g}, f.integration(true));
    if (traj.status == bc::TerminationStatus::Diverged) {
        throw std::domain_error("fit: trajectory diverged before the first peak");
    }
    std::optional<double> w0, w1;
    if (!window.empty()) {
        const bc::TimeWindow w = parse_window(window);
        w0 = w.t0;
        w1 = w.t1;
    }
    const bc::SuperExpFit fit = bc::fit_superexponential(traj, peak_index, w0, w1);

    if (f.format == "json") {
        json payload = bc::to_json(fit);
        json curve = json::array();
        for (std::size_t i = 0; i < traj.times.size(); ++i) {
            const double t = traj.times[i];
            if (t < fit.window_start || t > fit.window_end) continue;
            curve.push_back({{"t", t}, {"x", traj.states[i].x}, {"x_app", fit.eval(t)}});
        }
        payload["curve"] = std::move(curve);
        emit(f.out, bc::make_envelope(echo, "fit", payload).dump(2) + "\n");
        return 0;
    }

    std::ostringstream os;
    bc::CsvWriter csv(os);
    csv.field("t").field("x").field("x_app");
    csv.endrow();
    for (std::size_t i = 0; i < traj.times.size(); ++i) {
        const double t = traj.times[i];
        if (t < fit.window_start || t > fit.window_end) continue;
        csv.field(t).field(traj.states[i].x).field(fit.eval(t));
        csv.endrow();
    }
    emit(f.out, os.str());
    if (!f.out.empty()) {
        emit(f.out + ".fit.json", bc::to_json(fit).dump(2) + "\n");
    } else {
        std::cerr << "c1=" << bc::format_double(fit.c1) << " c2=" << bc::format_double(fit.c2)
                  << " t_lambda=" << bc::format_double(fit.t_lambda)
                  << " rms=" << bc::format_double(fit.rms_log_residual) << "\n";
    }
    return 0;
}

// --- exponents --------------------------------------------------------------

std::vector<double> decade_grid(const std::string& spec, int per_decade) {
    // "-2..-6" -> { -10^-2, ..., -10^-6 } with per_decade points per decade.
    const auto dots = spec.find("..");
    if (dots == std::string::npos) throw ConfigError("--g-decades expects lo..hi, e.g. -2..-6");
    double d0, d1;
    try {
        d0 = std::stod(spec.substr(0, dots));
        d1 = std::stod(spec.substr(dots + 2));
    } catch (const std::invalid_argument&) {
        throw ConfigError("--g-decades expects numeric decades");
    }
    if (d1 > d0) std::swap(d0, d1);
    if (per_decade < 1) throw ConfigError("--per-decade must be >= 1");
    std::vector<double> g;
    const int steps = static_cast<int>(std::lround((d0 - d1) * per_decade));
    for (int i = 0; i <= steps; ++i) {
        g.push_back(-std::pow(10.0, d0 - static_cast<double>(i) / per_decade));
    }
    return g;
}

int emit_exponent(const bc::ExponentEstimate& est, const char* what, const std::string& out,
                  const std::string& format, const json& echo) {
    if (format == "json") {
        json payload = bc::to_json(est);
        payload["exponent"] = what;
        emit(out, bc::make_envelope(echo, "exponent", payload).dump(2) + "\n");
        return 0;
    }
    std::ostringstream os;
    bc::CsvWriter csv(os);
    csv.field("grid").field("measured");
    csv.endrow();
    for (std::size_t i = 0; i < est.grid.size(); ++i) {
        csv.field(est.grid[i]).field(est.measured[i]);
        csv.endrow();
    }
    emit(out, os.str());
    json side = bc::to_json(est);
    side["exponent"] = what;
    if (!out.empty()) {
        emit(out + ".estimate.json", side.dump(2) + "\n");
    } else {
        std::cerr << what << "=" << bc::format_double(est.value)
                  << " stderr=" << bc::format_double(est.stderr_) << "\n";
    }
    return 0;
}

// --- table1 -----------------------------------------------------------------

int cmd_table1(const std::string& out, const std::string& format, int workers, double rtol,
               double atol, const json& echo) {
    const std::vector<double> gs = {-0.1768, -0.1,  -1e-2, -1e-3, -1e-4, -1e-5,
                                    -1e-6,   -1e-7, -1e-8, -1e-9, -1e-10};
    // The table quotes the first (largest) bubble's amplitude and its
    // half-amplitude width alongside the census over [0, 100].
    struct Row {
        int n = 0;
        double amplitude = 0, width = 0, mean_period = 0;
    };
    std::vector<std::function<Row()>> jobs;
    for (double g : gs) {
        jobs.push_back([=]() {
            bc::IntegrationConfig cfg;
            cfg.rtol = rtol;
            cfg.atol = atol;
            cfg.t_end = 100.0;
            cfg.initial = {1.0, 0.1};
            const bc::Trajectory traj = bc::integrate({1.0, g}, cfg);
            const auto events = bc::detect_bubbles(traj, bc::TransientPolicy::none());
            const bc::BubbleStats stats = bc::bubble_stats(events);
            Row r;
            r.n = stats.count;
            r.mean_period = stats.mean_period;
            if (!events.empty()) {
                r.amplitude = events.front().amplitude;
                r.width = events.front().width;
            }
            return r;
        });
    }
    const auto rows = run_ordered(jobs, workers);

    if (format == "json") {
        json jrows = json::array();
        for (std::size_t i = 0; i < gs.size(); ++i) {
            jrows.push_back({{"g", gs[i]},
                             {"n", rows[i].n},
                             {"amplitude", rows[i].amplitude},
                             {"width", rows[i].width},
                             {"mean_period", rows[i].mean_period}});
        }
        emit(out, bc::make_envelope(echo, "table1", json({{"rows", jrows}})).dump(2) + "\n");
        return 0;
    }

    std::ostringstream os;
    bc::CsvWriter csv(os);
    csv.field("g").field("n").field("amplitude").field("width").field("mean_period");
    csv.endrow();
    for (std::size_t i = 0; i < gs.size(); ++i) {
        csv.field(gs[i]).field(rows[i].n).field(rows[i].amplitude).field(rows[i].width)
            .field(rows[i].mean_period);
        csv.endrow();
    }
    emit(out, os.str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"bubblecycle: deterministic simulator and analysis toolkit for the coupled "
                 "asset/bond price system"};
    app.require_subcommand(1);
    int exit_code = 0;

    // simulate
    {
        auto* sub = app.add_subcommand("simulate", "integrate a trajectory to CSV/JSON");
        auto bind = std::make_shared<OptBinder>(sub);
        auto flags = std::make_shared<SimFlags>();
        auto expansion = std::make_shared<bool>(false);
        flags->bind(*bind);
        bind->add_flag("--expansion", *expansion, "also record the expansion exponent");
        sub->callback([bind, flags, expansion, &exit_code]() {
            bind->finalize();
            exit_code = cmd_simulate(*flags, *expansion, bind->echo());
        });
    }
    // fixed-points
    {
        auto* sub = app.add_subcommand("fixed-points", "fixed-point census with eigenvalues");
        auto bind = std::make_shared<OptBinder>(sub);
        auto b = std::make_shared<double>(1.0);
        auto g = std::make_shared<double>(-0.1);
        auto out = std::make_shared<std::string>();
        auto format = std::make_shared<std::string>("json");
        bind->add("--b", *b, "fundamental log-price rate b");
        bind->add("--g", *g, "log-discount rate g");
        bind->add("--out", *out, "output path (default stdout)");
        bind->add("--format", *format, "json or csv");
        sub->callback([=, &exit_code]() {
            bind->finalize();
            if (*format != "csv" && *format != "json")
                throw ConfigError("--format must be csv or json");
            exit_code = cmd_fixed_points(*b, *g, *out, *format, bind->echo());
        });
    }
    // region-map
    {
        auto* sub = app.add_subcommand("region-map", "label the (b,g) plane by region A-E");
        auto bind = std::make_shared<OptBinder>(sub);
        auto bmin = std::make_shared<double>(0.05);
        auto bmax = std::make_shared<double>(1.5);
        auto gmin = std::make_shared<double>(-0.25);
        auto gmax = std::make_shared<double>(0.35);
        auto nb = std::make_shared<int>(59);
        auto ng = std::make_shared<int>(61);
        auto out = std::make_shared<std::string>();
        auto format = std::make_shared<std::string>("csv");
        auto workers = std::make_shared<int>(1);
        bind->add("--b-min", *bmin, "lower b");
        bind->add("--b-max", *bmax, "upper b");
        bind->add("--g-min", *gmin, "lower g");
        bind->add("--g-max", *gmax, "upper g");
        bind->add("--nb", *nb, "grid points in b");
        bind->add("--ng", *ng, "grid points in g");
        bind->add("--out", *out, "output path (default stdout)");
        bind->add("--format", *format, "csv or json");
        auto* wopt = bind->add("--workers", *workers, "parallel workers (env BUBBLECYCLE_WORKERS)");
        sub->callback([=, &exit_code]() {
            bind->finalize();
            exit_code = cmd_region_map(*bmin, *bmax, *gmin, *gmax, *nb, *ng, *out, *format,
                                       resolve_workers(*workers, wopt->count() > 0),
                                       bind->echo());
        });
    }
    // bifurcation
    {
        auto* sub = app.add_subcommand("bifurcation", "fixed-point branches along one parameter");
        auto bind = std::make_shared<OptBinder>(sub);
        auto vary = std::make_shared<std::string>("g");
        auto fixed = std::make_shared<double>(0.4);
        auto lo = std::make_shared<double>(-0.1);
        auto hi = std::make_shared<double>(0.1);
        auto n = std::make_shared<int>(401);
        auto out = std::make_shared<std::string>();
        auto format = std::make_shared<std::string>("csv");
        bind->add("--vary", *vary, "which parameter varies: b or g");
        bind->add("--fixed", *fixed, "value of the non-varying parameter");
        bind->add("--min", *lo, "grid start");
        bind->add("--max", *hi, "grid end");
        bind->add("--n", *n, "grid points");
        bind->add("--out", *out, "output path (default stdout)");
        bind->add("--format", *format, "csv or json");
        sub->callback([=, &exit_code]() {
            bind->finalize();
            exit_code = cmd_bifurcation(*vary, *fixed, *lo, *hi, *n, *out, *format, bind->echo());
        });
    }
    // bubbles
    {
        auto* sub = app.add_subcommand("bubbles", "detect and quantify bubbles on a trajectory");
        auto bind = std::make_shared<OptBinder>(sub);
        auto flags = std::make_shared<SimFlags>();
        flags->t_end = 100.0;
        flags->bind(*bind);
        auto window = std::make_shared<std::string>();
        auto cutoff = std::make_shared<double>(-1.0);
        auto raw = std::make_shared<bool>(false);
        bind->add("--window", *window, "restrict stats to t0:t1");
        bind->add("--transient-cutoff", *cutoff, "drop peaks before this time");
        bind->add_flag("--raw", *raw, "keep every peak (no transient filter)");
        sub->callback([=, &exit_code]() {
            bind->finalize();
            exit_code = cmd_bubbles(*flags, *window, *cutoff, *raw, bind->echo());
        });
    }
    // fit
    {
        auto* sub = app.add_subcommand("fit", "super-exponential approximant before a peak");
        auto bind = std::make_shared<OptBinder>(sub);
        auto flags = std::make_shared<SimFlags>();
        flags->t_end = 200.0;
        flags->sample_dt = 0.01;
        flags->bind(*bind);
        auto window = std::make_shared<std::string>();
        auto peak = std::make_shared<int>(0);
        bind->add("--window", *window, "override the fit window t0:t1");
        bind->add("--peak-index", *peak, "which x-maximum to fit (0-based)");
        sub->callback([=, &exit_code]() {
            bind->finalize();
            exit_code = cmd_fit(*flags, *window, *peak, bind->echo());
        });
    }
    // exponents
    {
        auto* sub = app.add_subcommand("exponents", "critical exponent nu or gamma");
        auto which = std::make_shared<std::string>();
        sub->add_option("which", *which, "nu or gamma")->required();
        auto bind = std::make_shared<OptBinder>(sub);
        auto b = std::make_shared<double>(1.0);
        auto g = std::make_shared<double>(-0.03);
        auto dmin = std::make_shared<double>(1e-4);
        auto dmax = std::make_shared<double>(1e-2);
        auto n = std::make_shared<int>(7);
        auto decades = std::make_shared<std::string>("-2..-6");
        auto per_decade = std::make_shared<int>(2);
        auto out = std::make_shared<std::string>();
        auto format = std::make_shared<std::string>("csv");
        auto workers = std::make_shared<int>(1);
        auto rtol = std::make_shared<double>(1e-10);
        auto atol = std::make_shared<double>(1e-12);
        bind->add("--b", *b, "fixed b (gamma)");
        bind->add("--g", *g, "fixed g (nu)");
        bind->add("--delta-min", *dmin, "smallest Delta above the fold (nu)");
        bind->add("--delta-max", *dmax, "largest Delta (nu)");
        bind->add("--n", *n, "log-spaced Delta points (nu)");
        bind->add("--g-decades", *decades, "decade range for |g|, e.g. -2..-6 (gamma)");
        bind->add("--per-decade", *per_decade, "grid points per decade (gamma)");
        bind->add("--rtol", *rtol, "relative tolerance");
        bind->add("--atol", *atol, "absolute tolerance");
        bind->add("--out", *out, "output path (default stdout)");
        bind->add("--format", *format, "csv or json");
        auto* wopt = bind->add("--workers", *workers, "parallel workers (env BUBBLECYCLE_WORKERS)");
        sub->callback([=, &exit_code]() {
            bind->finalize();
            bc::ExponentOptions opt;
            opt.rtol = *rtol;
            opt.atol = *atol;
            opt.workers = resolve_workers(*workers, wopt->count() > 0);
            if (*which == "nu") {
                if (!(*dmin > 0.0) || !(*dmax > *dmin) || *n < 3)
                    throw ConfigError("nu needs 0 < delta-min < delta-max and n >= 3");
                std::vector<double> deltas;
                for (int i = 0; i < *n; ++i) {
                    deltas.push_back(*dmin * std::pow(*dmax / *dmin, i / (*n - 1.0)));
                }
                exit_code = emit_exponent(bc::estimate_nu(*g, deltas, opt), "nu", *out, *format,
                                          bind->echo());
            } else if (*which == "gamma") {
                exit_code = emit_exponent(bc::estimate_gamma(*b, decade_grid(*decades, *per_decade), opt),
                                          "gamma", *out, *format, bind->echo());
            } else {
                throw ConfigError("exponents: expected 'nu' or 'gamma'");
            }
        });
    }
    // table1
    {
        auto* sub = app.add_subcommand("table1", "bubble census per g at b = 1 over [0, 100]");
        auto bind = std::make_shared<OptBinder>(sub);
        auto out = std::make_shared<std::string>();
        auto format = std::make_shared<std::string>("csv");
        auto workers = std::make_shared<int>(1);
        auto rtol = std::make_shared<double>(1e-10);
        auto atol = std::make_shared<double>(1e-12);
        bind->add("--rtol", *rtol, "relative tolerance");
        bind->add("--atol", *atol, "absolute tolerance");
        bind->add("--out", *out, "output path (default stdout)");
        bind->add("--format", *format, "csv or json");
        auto* wopt = bind->add("--workers", *workers, "parallel workers (env BUBBLECYCLE_WORKERS)");
        sub->callback([=, &exit_code]() {
            bind->finalize();
            exit_code = cmd_table1(*out, *format,
                                   resolve_workers(*workers, wopt->count() > 0), *rtol, *atol,
                                   bind->echo());
        });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return 4;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::domain_error& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    }
    return exit_code;
}
