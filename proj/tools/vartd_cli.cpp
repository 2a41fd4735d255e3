// Command-line front end: model validation, exact and sampled solvers, the
// two benchmarks, and risk reporting. Results go to stdout as JSON; --out
// additionally writes them (and benchmark artifacts) into a directory. On
// failure the process exits nonzero with {"error":{...}} on stderr.
#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "vartd/bench.hpp"
#include "vartd/constrained.hpp"
#include "vartd/estimators.hpp"
#include "vartd/exact.hpp"
#include "vartd/io.hpp"
#include "vartd/mdp.hpp"
#include "vartd/simulate.hpp"

namespace {

using namespace vartd;

// validate needs the raw matrices before SspChain construction can throw;
// short local names for the io converters.
MatrixXd io_detail_matrix(const json& j) { return detail::matrix_from_json(j); }
VectorXd io_detail_vector(const json& j) { return detail::vector_from_json(j); }

struct CommonOpts {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 1;
    std::int64_t episodes = 10'000;
    double lambda = 0.95;
    bool episodes_set = false;
    bool lambda_set = false;
    bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool needs_config) {
    auto* cfg = cmd->add_option("--config", opts.config_path, "JSON configuration file");
    if (needs_config) cfg->required();
    cmd->add_option("--out", opts.out_dir, "output directory for artifacts");
    cmd->add_option("--seed", opts.seed, "RNG seed")->check(CLI::NonNegativeNumber);
    auto* ep = cmd->add_option("--episodes", opts.episodes, "episode budget")->check(CLI::PositiveNumber);
    auto* lam = cmd->add_option("--lambda", opts.lambda, "eligibility trace parameter");
    cmd->callback([&opts, ep, lam, cfg_opt = cmd->get_option("--seed")] {
        opts.episodes_set = ep->count() > 0;
        opts.lambda_set = lam->count() > 0;
        opts.seed_set = cfg_opt->count() > 0;
    });
}

json load_config(const CommonOpts& opts) {
    if (opts.config_path.empty()) return json::object();
    return load_json_file(opts.config_path);
}

SspChain chain_from_config(const json& cfg) {
    if (!cfg.contains("chain")) throw StructuralError("config needs a \"chain\" object");
    return chain_from_json(cfg["chain"]);
}

FeatureSet features_from_config(const json& cfg, const SspChain& chain) {
    if (!cfg.contains("features")) throw StructuralError("config needs a \"features\" object");
    const VectorXd q = occupancy(chain).q;
    return features_from_json(cfg["features"], chain.n(), &q, nullptr);
}

void emit(const json& result, const CommonOpts& opts, const std::string& name) {
    std::cout << result.dump(2) << "\n";
    if (!opts.out_dir.empty()) {
        std::filesystem::create_directories(opts.out_dir);
        save_json_file(opts.out_dir + "/" + name + ".json", result);
    }
}

json result_header(const std::string& command) {
    return json{{"command", command}, {"version", kLibraryVersion}};
}

int cmd_validate(const CommonOpts& opts) {
    const json cfg = load_config(opts);
    if (!cfg.contains("chain")) throw StructuralError("config needs a \"chain\" object");
    const json& cj = cfg["chain"];
    if (!cj.contains("n") || !cj.contains("P") || !cj.contains("r") || !cj.contains("zeta0"))
        throw StructuralError("chain JSON needs keys n, P, r, zeta0");
    const ValidationReport rep =
        validate_parts(io_detail_matrix(cj["P"]), io_detail_vector(cj["r"]), io_detail_vector(cj["zeta0"]));
    json out = result_header("validate");
    out["report"] = validation_to_json(rep);
    emit(out, opts, "validate");
    return rep.ok() ? 0 : 3;
}

int cmd_solve_exact(const CommonOpts& opts) {
    const json cfg = load_config(opts);
    const SspChain chain = chain_from_config(cfg);
    const TrueMoments tm = solve_true(chain);
    json out = result_header("solve-exact");
    out["J"] = detail::to_json(tm.J);
    out["M"] = detail::to_json(tm.M);
    out["V"] = detail::to_json(tm.V);
    if (cfg.contains("features")) {
        const FeatureSet fs = features_from_config(cfg, chain);
        auto [sys, res] = projected_solution(chain, fs, opts.lambda);
        out["lambda"] = opts.lambda;
        out["projected"] = eval_result_to_json(res);
    }
    emit(out, opts, "solve_exact");
    return 0;
}

int cmd_lstd(const CommonOpts& opts, double lambda, const std::string& name) {
    const json cfg = load_config(opts);
    const SspChain chain = chain_from_config(cfg);
    const FeatureSet fs = features_from_config(cfg, chain);
    const auto trajs = sample_batch(chain, opts.seed, opts.episodes);
    const auto [res, acc] = lstd_lambda(trajs, fs, lambda);
    json out = result_header(name);
    out["lambda"] = lambda;
    out["episodes"] = opts.episodes;
    out["seed"] = opts.seed;
    out["estimate"] = eval_result_to_json(res);
    emit(out, opts, name);
    return 0;
}

int cmd_td0(const CommonOpts& opts) {
    const json cfg = load_config(opts);
    const SspChain chain = chain_from_config(cfg);
    const FeatureSet fs = features_from_config(cfg, chain);
    const json sched = cfg.value("schedule", json::object());
    const StepSchedule schedule = StepSchedule::harmonic(sched.value("c", 20.0), sched.value("k0", 100.0));
    TdOptions topts;
    topts.k_max = opts.episodes;
    topts.record_stride = std::max<std::int64_t>(1, opts.episodes / 100);
    const auto history = td0(chain, fs, schedule, topts, opts.seed);
    const TdState& fin = history.back();
    json out = result_header("td0");
    out["episodes"] = opts.episodes;
    out["seed"] = opts.seed;
    out["schedule"] = {{"c", schedule.c()}, {"k0", schedule.k0()}};
    out["estimate"] = eval_result_to_json(make_eval_result(fs, fin.w_J, fin.w_M));
    json curve = json::array();
    for (const auto& st : history)
        curve.push_back({{"k", st.k}, {"w_J_norm", st.w_J.norm()}, {"w_M_norm", st.w_M.norm()}});
    out["history"] = curve;
    emit(out, opts, "td0");
    return 0;
}

int cmd_constrained(const CommonOpts& opts) {
    const json cfg = load_config(opts);
    const SspChain chain = chain_from_config(cfg);
    const FeatureSet fs = features_from_config(cfg, chain);
    auto [sys, res] = projected_solution(chain, fs, opts.lambda);
    std::vector<int> states;
    if (cfg.contains("constraint_states"))
        states = cfg["constraint_states"].get<std::vector<int>>();
    else
        for (int i = 1; i <= chain.n(); ++i) states.push_back(i);
    const ConstraintSet cs = build_constraints(states, fs, res.w_J);
    IterationConfig icfg;
    icfg.Xi = default_xi(fs, occupancy(chain).q);
    if (cfg.contains("gamma")) icfg.gamma = cfg["gamma"].get<double>();
    const ConstrainedResult cres = constrained_solve(sys, fs, res.w_J, cs, icfg);
    json out = result_header("constrained");
    out["lambda"] = opts.lambda;
    out["iters"] = cres.iters;
    out["gamma_final"] = cres.gamma_final;
    out["unconstrained"] = eval_result_to_json(res);
    out["estimate"] = eval_result_to_json(cres.eval);
    emit(out, opts, "constrained");
    return 0;
}

int cmd_diagnostics(const CommonOpts& opts) {
    const json cfg = load_config(opts);
    const SspChain chain = chain_from_config(cfg);
    const FeatureSet fs = features_from_config(cfg, chain);
    const DiagnosticsReport rep = diagnostics(chain, fs, opts.lambda);
    json out = result_header("diagnostics");
    out["lambda"] = opts.lambda;
    out["report"] = diagnostics_to_json(rep);
    emit(out, opts, "diagnostics");
    return 0;
}

int cmd_bench_chain(const CommonOpts& opts) {
    const json cfg = load_config(opts);
    ChainConfig bc;
    bc.n_states = cfg.value("n_states", bc.n_states);
    bc.p = cfg.value("p", bc.p);
    if (opts.lambda_set) bc.lambda = opts.lambda;
    bc.lambda = cfg.value("lambda", bc.lambda);
    if (opts.episodes_set) bc.episodes = opts.episodes;
    if (opts.seed_set) bc.seed = opts.seed;
    bc.out_dir = opts.out_dir;
    const ChainBenchmarkResult res = run_chain_benchmark(bc);
    json out = result_header("bench-chain");
    out["negative_tail"] = res.negative_tail;
    out["constrained_nonneg"] = res.constrained_nonneg;
    out["projected"] = eval_result_to_json(res.projected);
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_bench_maze(const CommonOpts& opts) {
    const json cfg = load_config(opts);
    MazeConfig mc;
    mc.width = cfg.value("width", mc.width);
    mc.height = cfg.value("height", mc.height);
    mc.p_intended = cfg.value("p_intended", mc.p_intended);
    mc.tabular_features = cfg.value("tabular_features", mc.tabular_features);
    mc.mc_per_cell = cfg.value("mc_per_cell", mc.mc_per_cell);
    mc.mc_calibration = cfg.value("mc_calibration", mc.mc_calibration);
    if (opts.lambda_set) mc.lambda = opts.lambda;
    if (opts.episodes_set) mc.episodes = opts.episodes;
    if (opts.seed_set) mc.seed = opts.seed;
    mc.out_dir = opts.out_dir;
    const MazeBenchmarkResult res = run_maze_benchmark(mc);
    json out = result_header("bench-maze");
    out["agree_fraction"] = res.agree_fraction;
    out["variance_monotone_in_value"] = res.variance_monotone_in_value;
    out["counterexample_states"] = res.counterexample;
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_risk_report(const CommonOpts& opts) {
    const json cfg = load_config(opts);
    if (!cfg.contains("eval")) throw StructuralError("config needs an \"eval\" object (weights and values)");
    const EvalResult eval = eval_result_from_json(cfg["eval"]);
    RiskThresholds th;
    const json tj = cfg.value("thresholds", json::object());
    th.c_var = tj.value("c_var", th.c_var);
    th.c_value = tj.value("c_value", th.c_value);
    th.c_sd = tj.value("c_sd", th.c_sd);
    json out = result_header("risk-report");
    out["thresholds"] = {{"c_var", th.c_var}, {"c_value", th.c_value}, {"c_sd", th.c_sd}};
    out.update(risk_report_to_json(risk_report(eval, th)));
    emit(out, opts, "risk_report");
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Value and variance estimation for stochastic shortest path chains"};
    app.require_subcommand(1);

    CommonOpts opts;
    struct Sub {
        const char* name;
        const char* desc;
        bool needs_config;
        int (*fn)(const CommonOpts&);
    };
    const Sub subs[] = {
        {"validate", "structural and properness checks for a chain model", true, cmd_validate},
        {"solve-exact", "exact J/M/V and optional projected solution", true, cmd_solve_exact},
        {"lstd", "single-step LSTD from simulated episodes", true,
         [](const CommonOpts& o) { return cmd_lstd(o, 0.0, "lstd"); }},
        {"lstd-lambda", "LSTD(lambda) with eligibility traces", true,
         [](const CommonOpts& o) { return cmd_lstd(o, o.lambda, "lstd_lambda"); }},
        {"td0", "online TD(0) with a harmonic step schedule", true, cmd_td0},
        {"constrained", "positive-variance constrained second-moment solve", true, cmd_constrained},
        {"diagnostics", "contraction and error-bound diagnostics", true, cmd_diagnostics},
        {"bench-chain", "30-state chain benchmark", false, cmd_bench_chain},
        {"bench-maze", "gridworld maze benchmark", false, cmd_bench_maze},
        {"risk-report", "per-state risk criteria over an estimate", true, cmd_risk_report},
    };
    std::vector<std::pair<CLI::App*, const Sub*>> wired;
    for (const Sub& s : subs) {
        CLI::App* cmd = app.add_subcommand(s.name, s.desc);
        add_common(cmd, opts, s.needs_config);
        wired.push_back({cmd, &s});
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help
        std::cerr << json{{"error", {{"type", "UsageError"}, {"message", e.what()}}}}.dump() << "\n";
        return 2;
    }

    try {
        for (const auto& [cmd, sub] : wired)
            if (cmd->parsed()) return sub->fn(opts);
        return 2;
    } catch (const Error& e) {
        std::string type = "Error";
        if (dynamic_cast<const StructuralError*>(&e)) type = "StructuralError";
        else if (dynamic_cast<const PropernessError*>(&e)) type = "PropernessError";
        else if (dynamic_cast<const NumericalError*>(&e)) type = "NumericalError";
        else if (dynamic_cast<const TruncationError*>(&e)) type = "TruncationError";
        else if (dynamic_cast<const DataDeficiencyError*>(&e)) type = "DataDeficiencyError";
        else if (dynamic_cast<const DivergenceError*>(&e)) type = "DivergenceError";
        else if (dynamic_cast<const ConvergenceError*>(&e)) type = "ConvergenceError";
        std::cerr << json{{"error", {{"type", type}, {"message", e.what()}}}}.dump() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << json{{"error", {{"type", "InternalError"}, {"message", e.what()}}}}.dump() << "\n";
        return 1;
    }
}
