#pragma once

// Serialization: RFC-4180-style CSV (LF line endings, mandatory header) and
// JSON result envelopes. All numbers are written as the shortest decimal
// that round-trips binary64, so artifacts re-ingest losslessly.

#include <charconv>
#include <chrono>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "bubblecycle/bubbles.hpp"
#include "bubblecycle/equilibria.hpp"
#include "bubblecycle/integrate.hpp"

namespace bubblecycle {

inline constexpr const char* kToolVersion = "1.0.0";

inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return {buf, res.ptr};
}

// Minimal CSV emitter. Fields here are numeric or simple identifiers, so
// quoting only kicks in for the RFC-4180 special characters.
class CsvWriter {
public:
    explicit CsvWriter(std::ostream& os) : os_(os) {}

    CsvWriter& field(const std::string& s) {
        if (!first_) os_ << ',';
        first_ = false;
        if (s.find_first_of(",\"\n") != std::string::npos) {
            os_ << '"';
            for (char c : s) {
                if (c == '"') os_ << '"';
                os_ << c;
            }
            os_ << '"';
        } else {
            os_ << s;
        }
        return *this;
    }
    CsvWriter& field(double v) { return field(format_double(v)); }
    CsvWriter& field(int v) { return field(std::to_string(v)); }
    void endrow() {
        os_ << '\n';
        first_ = true;
    }

private:
    std::ostream& os_;
    bool first_ = true;
};

inline std::string iso_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t tt = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm{};
    gmtime_r(&tt, &tm);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// JSON uses raw doubles; nlohmann::json serializes them with shortest
// round-trip precision already.
inline nlohmann::json to_json(const Event& e) {
    return {{"kind", to_string(e.kind)}, {"time", e.time}, {"value", e.value}};
}

inline nlohmann::json to_json(const FixedPoint& fp) {
    nlohmann::json j;
    j["x"] = fp.location.x;
    j["z"] = fp.location.z;
    j["lambda1"] = {{"re", fp.lambda1.real()}, {"im", fp.lambda1.imag()}};
    j["lambda2"] = {{"re", fp.lambda2.real()}, {"im", fp.lambda2.imag()}};
    j["kind"] = to_string(fp.kind);
    j["branch"] = fp.branch_index;
    j["near_degenerate"] = fp.near_degenerate;
    return j;
}

inline nlohmann::json to_json(const BubbleEvent& b) {
    return {{"index", b.index},     {"t_peak", b.t_peak}, {"amplitude", b.amplitude},
            {"width", b.width},     {"t_zmin", b.t_zmin}, {"lag", b.lag},
            {"relative_lag", b.relative_lag}, {"period_prev", b.period_prev}};
}

inline nlohmann::json to_json(const BubbleStats& s) {
    return {{"count", s.count},
            {"mean_amplitude", s.mean_amplitude},
            {"mean_width", s.mean_width},
            {"mean_period", s.mean_period},
            {"ratio_r", s.ratio_r},
            {"periods", s.periods}};
}

inline nlohmann::json to_json(const SuperExpFit& f) {
    return {{"c1", f.c1},
            {"c2", f.c2},
            {"alpha", f.alpha},
            {"beta", f.beta},
            {"t_lambda", f.t_lambda},
            {"window_start", f.window_start},
            {"window_end", f.window_end},
            {"rms_log_residual", f.rms_log_residual},
            {"n_points", f.n_points}};
}

inline nlohmann::json to_json(const ExponentEstimate& e) {
    return {{"value", e.value},          {"stderr", e.stderr_},
            {"ols_slope", e.ols_slope},  {"ols_stderr", e.ols_stderr},
            {"n_points", e.n_points},    {"grid", e.grid},
            {"measured", e.measured},    {"excluded", e.excluded}};
}

inline nlohmann::json make_envelope(const nlohmann::json& config, const char* payload_kind,
                                    nlohmann::json payload) {
    nlohmann::json j;
    j["version"] = kToolVersion;
    j["config"] = config;
    j["timestamp"] = iso_timestamp();
    j["payload_kind"] = payload_kind;
    j["payload"] = std::move(payload);
    return j;
}

inline void write_text_file(const std::string& path, const std::string& body) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << body;
    if (!os) throw std::runtime_error("write failed: " + path);
}

}  // namespace bubblecycle
