#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vartd/constrained.hpp"
#include "vartd/estimators.hpp"
#include "vartd/exact.hpp"
#include "vartd/features.hpp"
#include "vartd/io.hpp"
#include "vartd/mdp.hpp"
#include "vartd/simulate.hpp"

namespace vartd {

// ---------------------------------------------------------------------------
// Chain benchmark: N states with reward -1, forward with probability p,
// backward with 1-p; state 1 transitions to itself instead of backward and
// state N advances to the terminal with probability p. All episodes start
// at state 1 (the reflecting end), which reproduces the published sign
// pattern of the projected variance.
// ---------------------------------------------------------------------------

struct ChainConfig {
    int n_states = 30;
    double p = 0.7;
    double lambda = 0.95;
    std::int64_t episodes = 10'000;
    std::uint64_t seed = 1;
    std::string out_dir; // empty: no files written
};

inline SspChain make_chain(int n_states, double p) {
    if (n_states < 1 || !(p > 0.0 && p <= 1.0)) throw StructuralError("chain needs n >= 1 and p in (0,1]");
    MatrixXd pm = MatrixXd::Zero(n_states, n_states);
    for (int i = 0; i < n_states; ++i) {
        if (i + 1 < n_states) pm(i, i + 1) = p; // forward; state N's p goes to the terminal
        if (i == 0)
            pm(i, i) += 1.0 - p; // reflecting end
        else
            pm(i, i - 1) = 1.0 - p;
    }
    VectorXd r = -VectorXd::Ones(n_states);
    VectorXd z = VectorXd::Zero(n_states);
    z(0) = 1.0;
    return SspChain(std::move(pm), std::move(r), std::move(z));
}

struct ChainBenchmarkResult {
    TrueMoments true_moments;
    EvalResult projected;       // unconstrained at lambda
    VectorXd constrained_V;     // after the positive-variance iteration
    EvalResult lstd_estimate;   // LSTD(lambda) at the episode budget
    bool negative_tail = false; // V_tilde < 0 at the last two states
    bool constrained_nonneg = false;
};

namespace detail {

inline void write_csv_header(std::ofstream& out, const std::vector<std::string>& cols) {
    for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
    out << "\n";
}

} // namespace detail

inline ChainBenchmarkResult run_chain_benchmark(const ChainConfig& cfg) {
    const SspChain chain = make_chain(cfg.n_states, cfg.p);
    const FeatureSet fs = polynomial(cfg.n_states, 1, 2);
    ChainBenchmarkResult out;
    out.true_moments = solve_true(chain);

    auto [sys, proj] = projected_solution(chain, fs, cfg.lambda);
    out.projected = proj;

    const OccupancyWeights occ = occupancy(chain);
    std::vector<int> all_states(static_cast<std::size_t>(cfg.n_states));
    for (int i = 0; i < cfg.n_states; ++i) all_states[static_cast<std::size_t>(i)] = i + 1;
    const ConstraintSet cs = build_constraints(all_states, fs, proj.w_J);
    IterationConfig icfg;
    icfg.Xi = default_xi(fs, occ.q);
    const ConstrainedResult cres = constrained_solve(sys, fs, proj.w_J, cs, icfg);
    out.constrained_V = cres.eval.V_tilde;

    const std::vector<Trajectory> trajs = sample_batch(chain, cfg.seed, cfg.episodes);
    out.lstd_estimate = lstd_lambda(trajs, fs, cfg.lambda).first;

    const int n = cfg.n_states;
    out.negative_tail = n >= 2 && proj.V_tilde(n - 1) < 0.0 && proj.V_tilde(n - 2) < 0.0;
    out.constrained_nonneg = out.constrained_V.minCoeff() >= -1e-8;

    if (!cfg.out_dir.empty()) {
        namespace fsys = std::filesystem;
        fsys::create_directories(cfg.out_dir);
        {
            std::ofstream csv(cfg.out_dir + "/chain_states.csv");
            csv.precision(12);
            detail::write_csv_header(csv, {"state", "J_true", "M_true", "V_true", "J_proj", "M_proj", "V_proj",
                                           "V_constrained", "J_lstd", "M_lstd", "V_lstd"});
            for (int x = 0; x < n; ++x) {
                csv << (x + 1) << "," << out.true_moments.J(x) << "," << out.true_moments.M(x) << ","
                    << out.true_moments.V(x) << "," << proj.J_tilde(x) << "," << proj.M_tilde(x) << ","
                    << proj.V_tilde(x) << "," << out.constrained_V(x) << "," << out.lstd_estimate.J_tilde(x)
                    << "," << out.lstd_estimate.M_tilde(x) << "," << out.lstd_estimate.V_tilde(x) << "\n";
            }
        }
        json j;
        j["config"] = {{"n_states", cfg.n_states}, {"p", cfg.p},       {"lambda", cfg.lambda},
                       {"episodes", cfg.episodes}, {"seed", cfg.seed}, {"features", "polynomial(1,2)"}};
        j["version"] = kLibraryVersion;
        j["projected"] = eval_result_to_json(proj);
        j["constrained"] = eval_result_to_json(cres.eval);
        j["lstd"] = eval_result_to_json(out.lstd_estimate);
        j["constrained_iters"] = cres.iters;
        j["negative_tail"] = out.negative_tail;
        j["constrained_nonneg"] = out.constrained_nonneg;
        save_json_file(cfg.out_dir + "/chain_report.json", j);
    }

    if (!out.negative_tail && cfg.n_states == 30 && cfg.p == 0.7 && cfg.lambda == 0.95)
        throw NumericalError("chain benchmark: expected negative projected variance at the last two states");
    if (!out.constrained_nonneg)
        throw NumericalError("chain benchmark: constrained variance went below -1e-8");
    return out;
}

// ---------------------------------------------------------------------------
// Maze benchmark: W x H stochastic gridworld, reward -1 per step, intended
// move with probability 0.8 and lateral slips 0.1 each, fixed
// shortest-path-greedy policy, tile-coding features, LSTD(lambda).
// ---------------------------------------------------------------------------

struct MazeConfig {
    int width = 20;
    int height = 20;
    double p_intended = 0.8; // remaining mass split over the two lateral moves
    double lambda = 0.9;
    std::int64_t episodes = 3000;
    std::int64_t mc_per_cell = 100;
    std::int64_t mc_calibration = 5000; // per-cell sample for the SE estimate
    int tiles_x = 10;
    int tiles_y = 10;
    std::uint64_t seed = 1;
    bool tabular_features = false; // exact-representation mode (diagnostics)
    std::string out_dir;
};

struct MazeLayout {
    int width = 0;
    int height = 0;
    std::vector<std::pair<int, int>> cells; // free cells excluding the goal, state order
    std::pair<int, int> goal;
    std::vector<std::vector<bool>> wall; // wall[x][y]
};

/// Default layout: three wall segments and the goal in the far corner.
inline MazeLayout default_maze_layout(int width, int height) {
    MazeLayout lay;
    lay.width = width;
    lay.height = height;
    lay.wall.assign(static_cast<std::size_t>(width), std::vector<bool>(static_cast<std::size_t>(height), false));
    auto wall_at = [&](int x, int y) {
        if (x >= 0 && x < width && y >= 0 && y < height) lay.wall[static_cast<std::size_t>(x)][static_cast<std::size_t>(y)] = true;
    };
    for (int x = 3; x < std::min(width - 5, 15); ++x) wall_at(x, height / 4);
    for (int y = 2 * height / 5; y < height - 2; ++y) wall_at(2 * width / 5, y);
    for (int x = 3 * width / 5; x < width - 1; ++x) wall_at(x, 3 * height / 5);
    lay.goal = {width - 1, height - 1};
    lay.wall[static_cast<std::size_t>(lay.goal.first)][static_cast<std::size_t>(lay.goal.second)] = false;
    for (int x = 0; x < width; ++x)
        for (int y = 0; y < height; ++y)
            if (!lay.wall[static_cast<std::size_t>(x)][static_cast<std::size_t>(y)] &&
                std::pair{x, y} != lay.goal)
                lay.cells.push_back({x, y});
    return lay;
}

namespace detail {

inline const int kDx[4] = {1, -1, 0, 0};
inline const int kDy[4] = {0, 0, 1, -1};
inline const int kLateral[4][2] = {{2, 3}, {2, 3}, {0, 1}, {0, 1}};

inline bool maze_free(const MazeLayout& lay, int x, int y) {
    return x >= 0 && x < lay.width && y >= 0 && y < lay.height &&
           !lay.wall[static_cast<std::size_t>(x)][static_cast<std::size_t>(y)];
}

inline std::pair<int, int> maze_step(const MazeLayout& lay, std::pair<int, int> c, int dir) {
    const int nx = c.first + kDx[dir];
    const int ny = c.second + kDy[dir];
    if (maze_free(lay, nx, ny)) return {nx, ny};
    return c; // bump: stay put
}

/// BFS distance to the goal over free cells.
inline std::vector<std::vector<int>> maze_distances(const MazeLayout& lay) {
    constexpr int kInf = 1 << 29;
    std::vector<std::vector<int>> dist(static_cast<std::size_t>(lay.width),
                                       std::vector<int>(static_cast<std::size_t>(lay.height), kInf));
    std::deque<std::pair<int, int>> queue;
    dist[static_cast<std::size_t>(lay.goal.first)][static_cast<std::size_t>(lay.goal.second)] = 0;
    queue.push_back(lay.goal);
    while (!queue.empty()) {
        const auto [cx, cy] = queue.front();
        queue.pop_front();
        for (int d = 0; d < 4; ++d) {
            const int nx = cx + kDx[d];
            const int ny = cy + kDy[d];
            if (maze_free(lay, nx, ny) && dist[static_cast<std::size_t>(nx)][static_cast<std::size_t>(ny)] == kInf) {
                dist[static_cast<std::size_t>(nx)][static_cast<std::size_t>(ny)] =
                    dist[static_cast<std::size_t>(cx)][static_cast<std::size_t>(cy)] + 1;
                queue.push_back({nx, ny});
            }
        }
    }
    return dist;
}

} // namespace detail

/// Builds the 4-action gridworld MDP and the shortest-path-greedy policy,
/// then composes them into a proper chain with uniform zeta0 over the
/// non-goal free cells.
inline std::pair<ActionMdp, MatrixXd> make_maze_mdp(const MazeLayout& lay, double p_intended) {
    const auto dist = detail::maze_distances(lay);
    for (const auto& [x, y] : lay.cells)
        if (dist[static_cast<std::size_t>(x)][static_cast<std::size_t>(y)] >= (1 << 29))
            throw StructuralError("maze has unreachable free cells");
    const int n = static_cast<int>(lay.cells.size());
    std::vector<std::vector<int>> idx(static_cast<std::size_t>(lay.width),
                                      std::vector<int>(static_cast<std::size_t>(lay.height), -1));
    for (int s = 0; s < n; ++s)
        idx[static_cast<std::size_t>(lay.cells[static_cast<std::size_t>(s)].first)]
           [static_cast<std::size_t>(lay.cells[static_cast<std::size_t>(s)].second)] = s;

    const double p_lat = (1.0 - p_intended) / 2.0;
    ActionMdp mdp;
    mdp.n = n;
    mdp.k = 4;
    for (int a = 0; a < 4; ++a) {
        MatrixXd p = MatrixXd::Zero(n, n);
        for (int s = 0; s < n; ++s) {
            const auto c = lay.cells[static_cast<std::size_t>(s)];
            const std::pair<int, double> moves[3] = {
                {a, p_intended}, {detail::kLateral[a][0], p_lat}, {detail::kLateral[a][1], p_lat}};
            for (const auto& [dir, pr] : moves) {
                const auto nc = detail::maze_step(lay, c, dir);
                if (nc == lay.goal) continue; // absorbed
                p(s, idx[static_cast<std::size_t>(nc.first)][static_cast<std::size_t>(nc.second)]) += pr;
            }
        }
        mdp.P_a.push_back(std::move(p));
        mdp.r_a.push_back(-VectorXd::Ones(n));
    }

    MatrixXd policy = MatrixXd::Zero(n, 4);
    for (int s = 0; s < n; ++s) {
        const auto c = lay.cells[static_cast<std::size_t>(s)];
        int best = 0;
        int best_dist = 1 << 30;
        for (int d = 0; d < 4; ++d) {
            const auto nc = detail::maze_step(lay, c, d);
            const int nd = dist[static_cast<std::size_t>(nc.first)][static_cast<std::size_t>(nc.second)];
            if (nd < best_dist) {
                best_dist = nd;
                best = d;
            }
        }
        policy(s, best) = 1.0;
    }
    return {std::move(mdp), std::move(policy)};
}

struct MazeBenchmarkResult {
    MazeLayout layout;
    EvalResult lstd_estimate;
    VectorXd sd_lstd;     // sqrt(max(V_tilde, 0)) per state
    VectorXd sd_mc;       // per-cell Monte Carlo standard deviation
    VectorXd se_mc;       // asymptotic standard error of sd_mc
    double agree_fraction = 0.0; // cells with |sd_lstd - sd_mc| <= 3 se
    bool variance_monotone_in_value = true;
    std::array<int, 2> counterexample{-1, -1}; // state pair (1-based) breaking monotonicity
};

inline MazeBenchmarkResult run_maze_benchmark(const MazeConfig& cfg) {
    MazeBenchmarkResult out;
    out.layout = default_maze_layout(cfg.width, cfg.height);
    auto [mdp, policy] = make_maze_mdp(out.layout, cfg.p_intended);
    const SspChain chain = compose(mdp, policy);
    const int n = chain.n();
    const OccupancyWeights occ = occupancy(chain);

    std::optional<FeatureSet> fs;
    if (cfg.tabular_features) {
        fs.emplace(tabular(n));
    } else {
        std::vector<std::pair<double, double>> coords;
        coords.reserve(static_cast<std::size_t>(n));
        for (const auto& [x, y] : out.layout.cells)
            coords.push_back({x + 0.5, y + 0.5});
        TileSpec spec;
        spec.tiles_x = cfg.tiles_x;
        spec.tiles_y = cfg.tiles_y;
        spec.x0 = 0.0;
        spec.y0 = 0.0;
        spec.x1 = cfg.width;
        spec.y1 = cfg.height;
        fs.emplace(tile_coding(spec, coords, occ.q));
    }

    const std::vector<Trajectory> trajs = sample_batch(chain, cfg.seed, cfg.episodes);
    out.lstd_estimate = lstd_lambda(trajs, *fs, cfg.lambda).first;
    out.sd_lstd = out.lstd_estimate.V_tilde.cwiseMax(0.0).cwiseSqrt();

    out.sd_mc = VectorXd::Zero(n);
    out.se_mc = VectorXd::Zero(n);
    int agree = 0;
    for (int s = 0; s < n; ++s) {
        const MonteCarloMoments mc =
            monte_carlo_moments(chain, s, cfg.mc_per_cell, cfg.seed + 1 + static_cast<std::uint64_t>(s));
        out.sd_mc(s) = std::sqrt(std::max(0.0, mc.V_hat));
        // Delta method: se(sd) = se(var) / (2 sd), evaluated at the mc_per_cell
        // scale but calibrated on a larger independent sample. The plug-in
        // fourth moment of a small sample is biased low for the heavy-tailed
        // episode returns here, which understates the SE badly.
        const MonteCarloMoments cal = monte_carlo_moments(chain, s, cfg.mc_calibration,
                                                          cfg.seed + 100'000 + static_cast<std::uint64_t>(s));
        const double sd_cal = std::sqrt(std::max(0.0, cal.V_hat));
        out.se_mc(s) =
            sd_cal > 1e-12
                ? cal.se_V * std::sqrt(static_cast<double>(cfg.mc_calibration) / static_cast<double>(cfg.mc_per_cell)) /
                      (2.0 * sd_cal)
                : 0.0;
        if (std::abs(out.sd_lstd(s) - out.sd_mc(s)) <= 3.0 * out.se_mc(s) + 1e-6) ++agree;
    }
    out.agree_fraction = static_cast<double>(agree) / n;

    // is V_tilde a monotone function of J_tilde across cells?
    {
        std::vector<int> order(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
        std::sort(order.begin(), order.end(),
                  [&](int a, int b) { return out.lstd_estimate.J_tilde(a) < out.lstd_estimate.J_tilde(b); });
        bool saw_up = false, saw_down = false;
        int up_pair[2] = {-1, -1}, down_pair[2] = {-1, -1};
        for (int i = 0; i + 1 < n; ++i) {
            const int a = order[static_cast<std::size_t>(i)];
            const int b = order[static_cast<std::size_t>(i + 1)];
            const double dv = out.lstd_estimate.V_tilde(b) - out.lstd_estimate.V_tilde(a);
            if (dv > 1e-9 && !saw_up) {
                saw_up = true;
                up_pair[0] = a;
                up_pair[1] = b;
            }
            if (dv < -1e-9 && !saw_down) {
                saw_down = true;
                down_pair[0] = a;
                down_pair[1] = b;
            }
        }
        out.variance_monotone_in_value = !(saw_up && saw_down);
        if (saw_up && saw_down) out.counterexample = {down_pair[0] + 1, down_pair[1] + 1};
    }

    if (!cfg.out_dir.empty()) {
        namespace fsys = std::filesystem;
        fsys::create_directories(cfg.out_dir);
        auto write_grid = [&](const std::string& name, auto value_of) {
            std::ofstream csv(cfg.out_dir + "/" + name);
            csv.precision(12);
            std::vector<std::vector<int>> idx(static_cast<std::size_t>(cfg.width),
                                              std::vector<int>(static_cast<std::size_t>(cfg.height), -1));
            for (int s = 0; s < n; ++s)
                idx[static_cast<std::size_t>(out.layout.cells[static_cast<std::size_t>(s)].first)]
                   [static_cast<std::size_t>(out.layout.cells[static_cast<std::size_t>(s)].second)] = s;
            for (int y = cfg.height - 1; y >= 0; --y) {
                for (int x = 0; x < cfg.width; ++x) {
                    if (x) csv << ",";
                    const int s = idx[static_cast<std::size_t>(x)][static_cast<std::size_t>(y)];
                    if (s >= 0)
                        csv << value_of(s);
                    else
                        csv << "nan";
                }
                csv << "\n";
            }
        };
        write_grid("maze_J.csv", [&](int s) { return out.lstd_estimate.J_tilde(s); });
        write_grid("maze_sd_lstd.csv", [&](int s) { return out.sd_lstd(s); });
        write_grid("maze_sd_mc.csv", [&](int s) { return out.sd_mc(s); });
        write_grid("maze_se_mc.csv", [&](int s) { return out.se_mc(s); });
        json j;
        j["config"] = {{"width", cfg.width},       {"height", cfg.height},
                       {"p_intended", cfg.p_intended}, {"lambda", cfg.lambda},
                       {"episodes", cfg.episodes}, {"mc_per_cell", cfg.mc_per_cell},
                       {"tiles_x", cfg.tiles_x},   {"tiles_y", cfg.tiles_y},
                       {"seed", cfg.seed},         {"tabular", cfg.tabular_features}};
        j["version"] = kLibraryVersion;
        j["agree_fraction"] = out.agree_fraction;
        j["variance_monotone_in_value"] = out.variance_monotone_in_value;
        j["counterexample_states"] = out.counterexample;
        j["weights"] = eval_result_to_json(out.lstd_estimate);
        save_json_file(cfg.out_dir + "/maze_report.json", j);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Risk report: per-state criteria over an EvalResult.
// ---------------------------------------------------------------------------

struct RiskThresholds {
    double c_var = 1.0;   // (a) V <= c_var
    double c_value = 0.0; // (b) J >= c_value
    double c_sd = 1.0;    // (d) score J - c_sd * sqrt(V)
};

struct RiskRow {
    int state = 0; // 1-based
    double J = 0.0;
    double V = 0.0;
    double sd = 0.0;
    double sharpe = 0.0;
    bool sharpe_defined = false;
    bool var_bound_ok = false;   // criterion (a)
    bool value_bound_ok = false; // criterion (b)
    double penalized = 0.0;      // criterion (d) score
};

struct RiskReport {
    std::vector<RiskRow> rows;
};

inline RiskReport risk_report(const EvalResult& eval, const RiskThresholds& th) {
    RiskReport rep;
    for (Eigen::Index x = 0; x < eval.J_tilde.size(); ++x) {
        RiskRow row;
        row.state = static_cast<int>(x) + 1;
        row.J = eval.J_tilde(x);
        row.V = eval.V_tilde(x);
        row.sd = std::sqrt(std::max(0.0, row.V));
        row.sharpe_defined = row.V > 0.0;
        row.sharpe = row.sharpe_defined ? row.J / std::sqrt(row.V) : 0.0;
        row.var_bound_ok = row.V <= th.c_var;
        row.value_bound_ok = row.J >= th.c_value;
        row.penalized = row.J - th.c_sd * row.sd;
        rep.rows.push_back(row);
    }
    return rep;
}

inline json risk_report_to_json(const RiskReport& rep) {
    json rows = json::array();
    for (const auto& r : rep.rows) {
        rows.push_back({{"state", r.state},
                        {"J", r.J},
                        {"V", r.V},
                        {"sd", r.sd},
                        {"sharpe", r.sharpe_defined ? json(r.sharpe) : json(nullptr)},
                        {"sharpe_defined", r.sharpe_defined},
                        {"var_bound_ok", r.var_bound_ok},
                        {"value_bound_ok", r.value_bound_ok},
                        {"penalized", r.penalized}});
    }
    return json{{"rows", rows}};
}

} // namespace vartd
