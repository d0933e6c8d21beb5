#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include <json.hpp>

#include "bubblecycle/io.hpp"

using nlohmann::json;

namespace {

const std::string kBin = BUBBLECYCLE_BIN;

int run(const std::string& args) {
    const std::string cmd = kBin + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(is.good());
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

double logistic(double x0, double t) {
    return x0 * std::exp(t) / (1.0 + x0 * (std::exp(t) - 1.0));
}

}  // namespace

TEST_CASE("shortest round-trip serialization") {
    CHECK(bubblecycle::format_double(0.1) == "0.1");
    CHECK(bubblecycle::format_double(1.0) == "1");
    CHECK(bubblecycle::format_double(-0.029) == "-0.029");
    const double third = 1.0 / 3.0;
    CHECK(std::stod(bubblecycle::format_double(third)) == third);
    const double tiny = 5e-324;  // subnormal: stod would throw, strtod is fine
    CHECK(std::strtod(bubblecycle::format_double(tiny).c_str(), nullptr) == tiny);
}

TEST_CASE("simulate: logistic oracle through the CLI") {
    const std::string out = "/tmp/bc_cli_logistic.csv";
    REQUIRE(run("simulate --b 0 --g 0 --x0 0.5 --z0 1 --t-end 10 --sample-dt 0.5 --out " + out) == 0);
    const std::string body = slurp(out);
    CHECK(body.find("\r") == std::string::npos);  // LF only
    std::istringstream is(body);
    std::string line;
    REQUIRE(std::getline(is, line));
    CHECK(line == "t,x,z");
    int rows = 0;
    while (std::getline(is, line)) {
        double t, x, z;
        char c1, c2;
        std::istringstream ls(line);
        REQUIRE((ls >> t >> c1 >> x >> c2 >> z));
        CHECK(std::abs(x - logistic(0.5, t)) < 1e-8);
        CHECK(std::abs(z - logistic(1.0, t)) < 1e-8);
        ++rows;
    }
    CHECK(rows >= 21);
}

TEST_CASE("simulate: byte-identical round trip") {
    const std::string a = "/tmp/bc_cli_rt_a.csv", b = "/tmp/bc_cli_rt_b.csv";
    REQUIRE(run("simulate --b 0.5 --g -0.083 --x0 3 --z0 0.1 --t-end 100 --out " + a) == 0);
    REQUIRE(run("simulate --b 0.5 --g -0.083 --x0 3 --z0 0.1 --t-end 100 --out " + b) == 0);
    CHECK(slurp(a) == slurp(b));
}

TEST_CASE("simulate: divergence is reported, not fatal") {
    const std::string out = "/tmp/bc_cli_div.csv";
    REQUIRE(run("simulate --b 1 --g 0.1 --x0 1 --z0 0.1 --out " + out) == 0);
    const json side = json::parse(slurp(out + ".events.json"));
    CHECK(side.at("status") == "diverged");
}

TEST_CASE("json envelope echoes a reproducible config") {
    const std::string a = "/tmp/bc_cli_env_a.json", b = "/tmp/bc_cli_env_b.json";
    REQUIRE(run("simulate --b 1 --g -0.05 --t-end 50 --format json --out " + a) == 0);
    REQUIRE(run("simulate --b 1 --g -0.05 --t-end 50 --format json --out " + b) == 0);
    const json ja = json::parse(slurp(a)), jb = json::parse(slurp(b));
    CHECK(ja.at("version") == bubblecycle::kToolVersion);
    CHECK(ja.at("config").at("b") == 1.0);
    CHECK(ja.at("payload_kind") == "trajectory");
    CHECK(ja.at("payload") == jb.at("payload"));  // timestamps excluded
}

TEST_CASE("config file merges under explicit flags") {
    const std::string cfg = "/tmp/bc_cli_cfg.json";
    {
        std::ofstream os(cfg);
        os << R"({"b": 0.5, "g": -0.083, "t-end": 20})";
    }
    const std::string out = "/tmp/bc_cli_cfg_out.json";
    REQUIRE(run("simulate --config " + cfg + " --g -0.1 --format json --out " + out) == 0);
    const json j = json::parse(slurp(out));
    CHECK(j.at("config").at("b") == 0.5);     // from file
    CHECK(j.at("config").at("g") == -0.1);    // flag wins
    CHECK(j.at("config").at("t-end") == 20.0);
    {
        std::ofstream os(cfg);
        os << R"({"b": 0.5, "bogus": 1})";
    }
    CHECK(run("simulate --config " + cfg) == 2);
}

TEST_CASE("exit codes") {
    CHECK(run("simulate --no-such-flag 1") == 2);
    CHECK(run("simulate --t-end -5") == 2);
    CHECK(run("simulate --format yaml") == 2);
    CHECK(run("simulate --b 1 --g -0.05 --t-end 10 --out /nonexistent-dir/x.csv") == 4);
    CHECK(run("fit --b 1 --g 0.1") == 3);  // diverges before any peak
    CHECK(run("") == 2);                   // subcommand required
}

TEST_CASE("fixed-points: region E has only the trivial census") {
    const std::string out = "/tmp/bc_cli_fp.json";
    REQUIRE(run("fixed-points --b 1 --g 0.1 --out " + out) == 0);
    const json j = json::parse(slurp(out));
    CHECK(j.at("payload").at("region") == "E");
    CHECK(j.at("payload").at("trivial").size() == 3);
    CHECK(j.at("payload").at("nontrivial").empty());
}

TEST_CASE("region-map emits the grid and the critical-line companion") {
    const std::string out = "/tmp/bc_cli_map.csv";
    REQUIRE(run("region-map --nb 12 --ng 12 --workers 2 --out " + out) == 0);
    const std::string body = slurp(out);
    std::istringstream is(body);
    std::string line;
    REQUIRE(std::getline(is, line));
    CHECK(line == "b,g,region");
    std::set<std::string> regions;
    while (std::getline(is, line)) {
        regions.insert(line.substr(line.rfind(',') + 1));
    }
    for (const char* r : {"A", "B", "C", "D", "E"}) CHECK(regions.count(r) == 1);
    const std::string lines = slurp(out + ".lines.csv");
    CHECK(lines.rfind("line,b,g", 0) == 0);
    CHECK(lines.find("cusp") != std::string::npos);
    CHECK(lines.find("inv_e") != std::string::npos);
}

TEST_CASE("bifurcation CSV carries branch merge annotations") {
    const std::string out = "/tmp/bc_cli_bif.csv";
    REQUIRE(run("bifurcation --vary b --fixed -0.03 --min 0.05 --max 0.6 --n 200 --out " + out) == 0);
    const std::string body = slurp(out);
    CHECK(body.rfind("param,x_star,z_star,kind,branch", 0) == 0);
    const json ann = json::parse(slurp(out + ".annotations.json"));
    bool saw_b2 = false;
    for (const auto& a : ann.at("annotations")) {
        if (a.at("name") == "b2") saw_b2 = true;
    }
    CHECK(saw_b2);
}

TEST_CASE("bubbles and table1 headers are stable") {
    const std::string out = "/tmp/bc_cli_bub.csv";
    REQUIRE(run("bubbles --b 1 --g -0.1 --t-end 100 --raw --out " + out) == 0);
    CHECK(slurp(out).rfind("index,t_peak,amplitude,width,t_zmin,lag,period_prev", 0) == 0);
    const json stats = json::parse(slurp(out + ".stats.json"));
    CHECK(stats.at("count") == 15);

    const std::string t1 = "/tmp/bc_cli_t1.csv";
    REQUIRE(run("table1 --workers 4 --out " + t1) == 0);
    std::istringstream is(slurp(t1));
    std::string line;
    REQUIRE(std::getline(is, line));
    CHECK(line == "g,n,amplitude,width,mean_period");
    std::vector<int> ns;
    while (std::getline(is, line)) {
        const auto c1 = line.find(',');
        ns.push_back(std::stoi(line.substr(c1 + 1)));
    }
    CHECK(ns == std::vector<int>{19, 15, 8, 6, 4, 4, 3, 3, 2, 2, 2});
}

TEST_CASE("workers env variable is honored and output order is fixed") {
    const std::string a = "/tmp/bc_cli_w_a.csv", b = "/tmp/bc_cli_w_b.csv";
    const std::string cmd_a = "BUBBLECYCLE_WORKERS=4 " + kBin +
                              " region-map --nb 10 --ng 10 --out " + a + " >/dev/null 2>&1";
    REQUIRE(WEXITSTATUS(std::system(cmd_a.c_str())) == 0);
    REQUIRE(run("region-map --nb 10 --ng 10 --workers 1 --out " + b) == 0);
    CHECK(slurp(a) == slurp(b));
}

TEST_CASE("CSV quoting escapes the RFC-4180 specials") {
    std::ostringstream os;
    bubblecycle::CsvWriter csv(os);
    csv.field(std::string("a,b")).field(std::string("q\"q")).field(1.5);
    csv.endrow();
    CHECK(os.str() == "\"a,b\",\"q\"\"q\",1.5\n");
}
