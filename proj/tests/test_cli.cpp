#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "vartd/bench.hpp"
#include "vartd/io.hpp"

using nlohmann::json;
namespace fsys = std::filesystem;

namespace {

struct CmdResult {
    int exit_code;
    std::string out;
    std::string err;
    json out_json() const { return json::parse(out); }
    json err_json() const { return json::parse(err); }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

CmdResult run_cli(const std::string& args) {
    const char* exe = std::getenv("VARTD_CLI");
    REQUIRE_MESSAGE(exe != nullptr, "VARTD_CLI must point at the CLI binary");
    const std::string cmd = std::string(exe) + " " + args + " >cli_stdout.txt 2>cli_stderr.txt";
    const int rc = std::system(cmd.c_str());
    CmdResult res;
    res.exit_code = (rc >= 0 && WIFEXITED(rc)) ? WEXITSTATUS(rc) : -1;
    res.out = slurp("cli_stdout.txt");
    res.err = slurp("cli_stderr.txt");
    return res;
}

/// Two-state deterministic chain: 1 -> 2 -> terminal, rewards 1 and 2.
/// J = (3, 2), M = (9, 4), V = (0, 0).
void write_two_chain(const std::string& path, bool with_features = true) {
    json cfg;
    cfg["chain"] = {{"n", 2},
                    {"P", {{0.0, 1.0}, {0.0, 0.0}}},
                    {"r", {1.0, 2.0}},
                    {"zeta0", {1.0, 0.0}}};
    if (with_features) cfg["features"] = {{"kind", "tabular"}};
    std::ofstream(path) << cfg.dump(2);
}

void write_chain30(const std::string& path) {
    const vartd::SspChain chain = vartd::make_chain(30, 0.7);
    json cfg;
    cfg["chain"] = {{"n", 30},
                    {"P", vartd::detail::to_json(chain.P())},
                    {"r", vartd::detail::to_json(chain.r())},
                    {"zeta0", vartd::detail::to_json(chain.zeta0())}};
    cfg["features"] = {{"kind", "polynomial"}, {"params", {{"degree_J", 1}, {"degree_M", 2}}}};
    std::ofstream(path) << cfg.dump(2);
}

} // namespace

TEST_CASE("help exits zero; missing or unknown subcommands exit 2 with usage error") {
    CHECK(run_cli("--help").exit_code == 0);
    const CmdResult none = run_cli("");
    CHECK(none.exit_code == 2);
    CHECK(none.err_json()["error"]["type"] == "UsageError");
    const CmdResult bogus = run_cli("frobnicate");
    CHECK(bogus.exit_code == 2);
    CHECK(bogus.err_json()["error"]["type"] == "UsageError");
}

TEST_CASE("validate: clean chain exits 0, broken chain exits 3, bad path exits 1") {
    write_two_chain("cli_two.json");
    const CmdResult ok = run_cli("validate --config cli_two.json");
    CHECK(ok.exit_code == 0);
    CHECK(ok.out_json()["report"]["ok"] == true);

    json bad;
    bad["chain"] = {{"n", 2},
                    {"P", {{0.6, 0.6}, {0.0, 0.0}}}, // row mass 1.2
                    {"r", {1.0, 2.0}},
                    {"zeta0", {1.0, 0.0}}};
    std::ofstream("cli_bad.json") << bad.dump();
    const CmdResult notok = run_cli("validate --config cli_bad.json");
    CHECK(notok.exit_code == 3);
    CHECK(notok.out_json()["report"]["ok"] == false);

    const CmdResult missing = run_cli("validate --config cli_no_such_file.json");
    CHECK(missing.exit_code == 1);
    CHECK(missing.err_json()["error"]["type"] == "StructuralError");
    CHECK(missing.out.empty());
}

TEST_CASE("solve-exact: closed-form moments of the two-state chain") {
    write_two_chain("cli_two.json");
    const CmdResult res = run_cli("solve-exact --config cli_two.json --lambda 0.5");
    REQUIRE(res.exit_code == 0);
    const json j = res.out_json();
    CHECK(j["J"][0].get<double>() == doctest::Approx(3.0));
    CHECK(j["J"][1].get<double>() == doctest::Approx(2.0));
    CHECK(j["M"][0].get<double>() == doctest::Approx(9.0));
    CHECK(j["M"][1].get<double>() == doctest::Approx(4.0));
    CHECK(j["V"][0].get<double>() == doctest::Approx(0.0));
    CHECK(j["V"][1].get<double>() == doctest::Approx(0.0));
    // tabular features: the projected solution reproduces the truth
    CHECK(j["projected"]["J"][0].get<double>() == doctest::Approx(3.0));
    CHECK(j["projected"]["M"][1].get<double>() == doctest::Approx(4.0));
}

TEST_CASE("lstd on a deterministic chain recovers the exact values") {
    write_two_chain("cli_two.json");
    const CmdResult res = run_cli("lstd --config cli_two.json --episodes 50 --seed 5");
    REQUIRE(res.exit_code == 0);
    const json j = res.out_json();
    CHECK(j["lambda"].get<double>() == 0.0);
    CHECK(j["episodes"].get<int>() == 50);
    CHECK(j["estimate"]["J"][0].get<double>() == doctest::Approx(3.0));
    CHECK(j["estimate"]["J"][1].get<double>() == doctest::Approx(2.0));
    CHECK(j["estimate"]["V"][0].get<double>() == doctest::Approx(0.0));
}

TEST_CASE("lstd-lambda at lambda 0 reproduces lstd, and runs are seed-deterministic") {
    write_two_chain("cli_two.json");
    const json a = run_cli("lstd --config cli_two.json --episodes 50 --seed 5").out_json();
    const json b = run_cli("lstd-lambda --config cli_two.json --episodes 50 --seed 5 --lambda 0").out_json();
    CHECK(a["estimate"] == b["estimate"]);
    const CmdResult r1 = run_cli("lstd-lambda --config cli_two.json --episodes 80 --seed 9 --lambda 0.7");
    const CmdResult r2 = run_cli("lstd-lambda --config cli_two.json --episodes 80 --seed 9 --lambda 0.7");
    CHECK(r1.out == r2.out);
}

TEST_CASE("td0 converges near the exact values on the two-state chain") {
    write_two_chain("cli_two.json");
    const CmdResult res = run_cli("td0 --config cli_two.json --episodes 2000 --seed 3");
    REQUIRE(res.exit_code == 0);
    const json j = res.out_json();
    CHECK(j["schedule"]["c"].get<double>() == doctest::Approx(20.0));
    CHECK(j["schedule"]["k0"].get<double>() == doctest::Approx(100.0));
    CHECK(j["estimate"]["J"][0].get<double>() == doctest::Approx(3.0).epsilon(0.05));
    CHECK(j["estimate"]["J"][1].get<double>() == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("constrained repairs the negative variance tail of the 30-state chain") {
    write_chain30("cli_chain30.json");
    const CmdResult res = run_cli("constrained --config cli_chain30.json --lambda 0.95");
    REQUIRE(res.exit_code == 0);
    const json j = res.out_json();
    double vmin = 1e300;
    for (const auto& v : j["estimate"]["V"]) vmin = std::min(vmin, v.get<double>());
    CHECK(vmin >= -1e-8);
    CHECK(j["iters"].get<int>() >= 1);
}

TEST_CASE("diagnostics reports contraction moduli below one") {
    write_chain30("cli_chain30.json");
    const CmdResult res = run_cli("diagnostics --config cli_chain30.json --lambda 0.95");
    REQUIRE(res.exit_code == 0);
    const json rep = res.out_json()["report"];
    CHECK(rep["rho_J"].get<double>() < 1.0);
    CHECK(rep["rho_M"].get<double>() < 1.0);
    CHECK(rep["rho_single"].get<double>() < 1.0);
    CHECK(rep["error_bound_lhs"].get<double>() <= rep["error_bound_rhs"].get<double>());
}

TEST_CASE("bench-chain writes report files and flags the negative tail") {
    fsys::remove_all("cli_bench_out");
    const CmdResult res = run_cli("bench-chain --episodes 500 --seed 1 --out cli_bench_out");
    REQUIRE(res.exit_code == 0);
    const json j = res.out_json();
    CHECK(j["negative_tail"] == true);
    CHECK(j["constrained_nonneg"] == true);
    CHECK(fsys::exists("cli_bench_out/chain_states.csv"));
    CHECK(fsys::exists("cli_bench_out/chain_report.json"));
    fsys::remove_all("cli_bench_out");
}

TEST_CASE("bench-maze runs a small grid and reports an agreement fraction") {
    json cfg = {{"width", 10},
                {"height", 10},
                {"tabular_features", true},
                {"mc_per_cell", 50},
                {"mc_calibration", 300}};
    std::ofstream("cli_maze.json") << cfg.dump();
    const CmdResult res = run_cli("bench-maze --config cli_maze.json --episodes 1200 --seed 1");
    REQUIRE(res.exit_code == 0);
    const json j = res.out_json();
    const double agree = j["agree_fraction"].get<double>();
    CHECK(agree >= 0.0);
    CHECK(agree <= 1.0);
    CHECK(j.contains("variance_monotone_in_value"));
}

TEST_CASE("risk-report echoes thresholds and emits per-state rows") {
    json cfg;
    cfg["eval"] = {{"w_J", {2.0, 1.0}},
                   {"w_M", {8.0, 1.0}},
                   {"J", {2.0, 1.0}},
                   {"M", {8.0, 1.0}},
                   {"V", {4.0, 0.0}}};
    cfg["thresholds"] = {{"c_var", 3.0}, {"c_value", 1.5}, {"c_sd", 1.0}};
    std::ofstream("cli_risk.json") << cfg.dump();
    const CmdResult res = run_cli("risk-report --config cli_risk.json");
    REQUIRE(res.exit_code == 0);
    const json j = res.out_json();
    CHECK(j["thresholds"]["c_var"].get<double>() == doctest::Approx(3.0));
    REQUIRE(j["rows"].size() == 2);
    CHECK(j["rows"][0]["sharpe"].get<double>() == doctest::Approx(1.0));
    CHECK(j["rows"][0]["var_bound_ok"] == false);
}

TEST_CASE("--out mirrors the stdout document into a json file") {
    write_two_chain("cli_two.json");
    fsys::remove_all("cli_out_dir");
    const CmdResult res = run_cli("solve-exact --config cli_two.json --out cli_out_dir");
    REQUIRE(res.exit_code == 0);
    REQUIRE(fsys::exists("cli_out_dir/solve_exact.json"));
    CHECK(json::parse(slurp("cli_out_dir/solve_exact.json")) == res.out_json());
    fsys::remove_all("cli_out_dir");
}

TEST_CASE("config without required sections reports a structural error") {
    std::ofstream("cli_empty.json") << "{}";
    const CmdResult res = run_cli("solve-exact --config cli_empty.json");
    CHECK(res.exit_code == 1);
    CHECK(res.err_json()["error"]["type"] == "StructuralError");
    const CmdResult risk = run_cli("risk-report --config cli_empty.json");
    CHECK(risk.exit_code == 1);
    CHECK(risk.err_json()["error"]["type"] == "StructuralError");
}
