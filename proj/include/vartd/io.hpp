#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vartd/errors.hpp"
#include "vartd/exact.hpp"
#include "vartd/features.hpp"
#include "vartd/mdp.hpp"
#include "vartd/simulate.hpp"

namespace vartd {

using nlohmann::json;

inline constexpr const char* kLibraryVersion = "0.1.0";

namespace detail {

inline VectorXd vector_from_json(const json& j) {
    VectorXd v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    return v;
}

inline MatrixXd matrix_from_json(const json& j) {
    if (j.empty()) return MatrixXd(0, 0);
    MatrixXd m(j.size(), j[0].size());
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (j[i].size() != j[0].size()) throw StructuralError("ragged matrix in JSON");
        for (std::size_t c = 0; c < j[i].size(); ++c)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = j[i][c].get<double>();
    }
    return m;
}

inline json to_json(const VectorXd& v) {
    json j = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v(i));
    return j;
}

inline json to_json(const MatrixXd& m) {
    json j = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(i, c));
        j.push_back(row);
    }
    return j;
}

} // namespace detail

/// Model file: { "n": int, "P": [[...]], "r": [...], "zeta0": [...] }.
inline SspChain chain_from_json(const json& j) {
    if (!j.contains("n") || !j.contains("P") || !j.contains("r") || !j.contains("zeta0"))
        throw StructuralError("chain JSON needs keys n, P, r, zeta0");
    const int n = j["n"].get<int>();
    MatrixXd p = detail::matrix_from_json(j["P"]);
    VectorXd r = detail::vector_from_json(j["r"]);
    VectorXd z = detail::vector_from_json(j["zeta0"]);
    if (p.rows() != n || p.cols() != n || r.size() != n || z.size() != n)
        throw StructuralError("chain JSON dimensions inconsistent with n");
    return SspChain(std::move(p), std::move(r), std::move(z));
}

inline json chain_to_json(const SspChain& chain) {
    json j;
    j["n"] = chain.n();
    j["P"] = detail::to_json(chain.P());
    j["r"] = detail::to_json(chain.r());
    j["zeta0"] = detail::to_json(chain.zeta0());
    return j;
}

/// ActionMdp file adds "actions": k and per-action "P_a", "r_a" arrays.
inline ActionMdp action_mdp_from_json(const json& j) {
    ActionMdp mdp;
    mdp.n = j.at("n").get<int>();
    mdp.k = j.at("actions").get<int>();
    for (const auto& pj : j.at("P_a")) mdp.P_a.push_back(detail::matrix_from_json(pj));
    for (const auto& rj : j.at("r_a")) mdp.r_a.push_back(detail::vector_from_json(rj));
    if (static_cast<int>(mdp.P_a.size()) != mdp.k || static_cast<int>(mdp.r_a.size()) != mdp.k)
        throw StructuralError("ActionMdp JSON: P_a/r_a count must equal actions");
    return mdp;
}

/// Feature spec: {"kind":"tabular"|"polynomial"|"tile","params":{...}}.
/// Tile specs need occupancy weights (for rank repair) and per-state
/// coordinates, so "tile" is only valid where the caller supplies them.
inline FeatureSet features_from_json(const json& j, int n, const VectorXd* q = nullptr,
                                     const std::vector<std::pair<double, double>>* coords = nullptr) {
    const std::string kind = j.at("kind").get<std::string>();
    const json params = j.value("params", json::object());
    if (kind == "tabular") return tabular(n);
    if (kind == "polynomial")
        return polynomial(n, params.value("degree_J", 1), params.value("degree_M", 2));
    if (kind == "tile") {
        if (!q || !coords) throw StructuralError("tile features need occupancy weights and coordinates");
        TileSpec spec;
        spec.tiles_x = params.value("tiles_x", 10);
        spec.tiles_y = params.value("tiles_y", 10);
        spec.x0 = params.value("x0", 0.0);
        spec.y0 = params.value("y0", 0.0);
        spec.x1 = params.value("x1", 1.0);
        spec.y1 = params.value("y1", 1.0);
        return tile_coding(spec, *coords, *q);
    }
    throw StructuralError("unknown feature kind: " + kind);
}

inline json eval_result_to_json(const EvalResult& res) {
    json j;
    j["w_J"] = detail::to_json(res.w_J);
    j["w_M"] = detail::to_json(res.w_M);
    j["J"] = detail::to_json(res.J_tilde);
    j["M"] = detail::to_json(res.M_tilde);
    j["V"] = detail::to_json(res.V_tilde);
    return j;
}

inline EvalResult eval_result_from_json(const json& j) {
    EvalResult res;
    res.w_J = detail::vector_from_json(j.at("w_J"));
    res.w_M = detail::vector_from_json(j.at("w_M"));
    res.J_tilde = detail::vector_from_json(j.at("J"));
    res.M_tilde = detail::vector_from_json(j.at("M"));
    res.V_tilde = detail::vector_from_json(j.at("V"));
    return res;
}

inline json diagnostics_to_json(const DiagnosticsReport& rep) {
    json j;
    j["rho_single"] = rep.rho_single;
    j["rho_J"] = rep.rho_J;
    j["rho_M"] = rep.rho_M;
    j["error_bound_lhs"] = rep.error_bound_lhs;
    j["error_bound_rhs"] = rep.error_bound_rhs;
    return j;
}

inline json validation_to_json(const ValidationReport& rep) {
    json j;
    j["structural_ok"] = rep.structural_ok;
    j["distribution_ok"] = rep.distribution_ok;
    j["proper"] = rep.proper;
    j["spectral_radius"] = rep.spectral_radius;
    j["offending_states"] = rep.offending_states;
    j["messages"] = rep.messages;
    j["ok"] = rep.ok();
    return j;
}

inline json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw StructuralError("cannot open file: " + path);
    json j;
    in >> j;
    return j;
}

inline void save_json_file(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw StructuralError("cannot write file: " + path);
    out << j.dump(2) << "\n";
}

/// Trajectory log: one episode per line, "tau,B,s1,s2,..." with 1-based states.
inline void write_trajectories_csv(const std::string& path, const std::vector<Trajectory>& trajs) {
    std::ofstream out(path);
    if (!out) throw StructuralError("cannot write file: " + path);
    out.precision(17);
    for (const auto& t : trajs) {
        out << t.tau << "," << t.B;
        for (int s : t.states) out << "," << (s + 1);
        out << "\n";
    }
}

/// Rewards are reconstructed from the chain's reward vector.
inline std::vector<Trajectory> read_trajectories_csv(const std::string& path, const SspChain& chain) {
    std::ifstream in(path);
    if (!in) throw StructuralError("cannot open file: " + path);
    std::vector<Trajectory> trajs;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        Trajectory t;
        if (!std::getline(ss, cell, ',')) throw StructuralError("malformed trajectory line");
        t.tau = std::stoll(cell);
        if (!std::getline(ss, cell, ',')) throw StructuralError("malformed trajectory line");
        t.B = std::stod(cell);
        while (std::getline(ss, cell, ',')) {
            const int s = std::stoi(cell) - 1;
            if (s < 0 || s >= chain.n()) throw StructuralError("trajectory state out of range");
            t.states.push_back(s);
            t.rewards.push_back(chain.r()(s));
        }
        if (static_cast<std::int64_t>(t.states.size()) != t.tau)
            throw StructuralError("trajectory tau does not match state count");
        trajs.push_back(std::move(t));
    }
    return trajs;
}

} // namespace vartd
