#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "vartd/errors.hpp"

namespace vartd {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double kRowSumSlack = 1e-12;
inline constexpr double kDistributionSlack = 1e-12;
inline constexpr double kPropernessThreshold = 1.0 - 1e-10;
inline constexpr int kPowerIterations = 200;

struct ValidationReport {
    bool structural_ok = false;
    bool distribution_ok = false; // zeta0 is a distribution
    bool proper = false;
    double spectral_radius = 0.0;
    std::vector<int> offending_states; // 1-based, states that never reach the terminal
    std::vector<std::string> messages;

    bool ok() const { return structural_ok && distribution_ok && proper; }
};

namespace detail {

/// Power iteration on the (entrywise nonnegative) matrix P.
inline double spectral_radius_estimate(const MatrixXd& p, int iterations = kPowerIterations) {
    const auto n = p.rows();
    VectorXd v = VectorXd::Ones(n) / std::sqrt(static_cast<double>(n));
    double rho = 0.0;
    for (int it = 0; it < iterations; ++it) {
        VectorXd w = p * v;
        const double norm = w.norm();
        if (norm < 1e-300) return 0.0;
        rho = norm;
        v = w / norm;
    }
    return rho;
}

/// States (0-based) with no positive-probability path to the terminal.
inline std::vector<int> states_not_reaching_terminal(const MatrixXd& p) {
    const auto n = p.rows();
    std::vector<char> reaches(static_cast<std::size_t>(n), 0);
    // seed: states with direct terminal mass
    for (Eigen::Index x = 0; x < n; ++x)
        if (p.row(x).sum() < 1.0 - kRowSumSlack) reaches[static_cast<std::size_t>(x)] = 1;
    bool changed = true;
    while (changed) {
        changed = false;
        for (Eigen::Index x = 0; x < n; ++x) {
            if (reaches[static_cast<std::size_t>(x)]) continue;
            for (Eigen::Index y = 0; y < n; ++y) {
                if (p(x, y) > 0.0 && reaches[static_cast<std::size_t>(y)]) {
                    reaches[static_cast<std::size_t>(x)] = 1;
                    changed = true;
                    break;
                }
            }
        }
    }
    std::vector<int> bad;
    for (Eigen::Index x = 0; x < n; ++x)
        if (!reaches[static_cast<std::size_t>(x)]) bad.push_back(static_cast<int>(x));
    return bad;
}

} // namespace detail

/// Validates the raw pieces of an SSP chain without constructing one.
inline ValidationReport validate_parts(const MatrixXd& p, const VectorXd& r, const VectorXd& zeta0) {
    ValidationReport rep;
    const auto n = p.rows();
    if (n < 1 || p.cols() != n || r.size() != n || zeta0.size() != n) {
        rep.messages.push_back("dimension mismatch: P must be n x n with matching r and zeta0");
        return rep;
    }
    rep.structural_ok = true;
    for (Eigen::Index x = 0; x < n && rep.structural_ok; ++x) {
        double row = 0.0;
        for (Eigen::Index y = 0; y < n; ++y) {
            const double v = p(x, y);
            if (!(v >= 0.0 && v <= 1.0)) {
                rep.structural_ok = false;
                rep.messages.push_back("P entry out of [0,1] at row " + std::to_string(x + 1));
                break;
            }
            row += v;
        }
        if (rep.structural_ok && row > 1.0 + kRowSumSlack) {
            rep.structural_ok = false;
            rep.messages.push_back("row sum exceeds 1 at state " + std::to_string(x + 1));
        }
    }
    if (!rep.structural_ok) return rep;

    rep.distribution_ok = zeta0.minCoeff() >= 0.0 && std::abs(zeta0.sum() - 1.0) <= kDistributionSlack;
    if (!rep.distribution_ok) rep.messages.push_back("zeta0 is not a probability distribution");

    rep.spectral_radius = detail::spectral_radius_estimate(p);
    rep.proper = rep.spectral_radius < kPropernessThreshold;
    if (!rep.proper) {
        auto bad = detail::states_not_reaching_terminal(p);
        for (int b : bad) rep.offending_states.push_back(b + 1);
        std::string msg = "chain is not proper (spectral radius " + std::to_string(rep.spectral_radius) + ")";
        if (!rep.offending_states.empty()) {
            msg += "; recurrent class includes state " + std::to_string(rep.offending_states.front());
        }
        rep.messages.push_back(msg);
    }
    return rep;
}

/// Finite-state policy-induced SSP chain. States are 1..n externally and
/// 0..n-1 in the matrices; the terminal state is implicit, its probability
/// from state x being the row-sum deficit 1 - sum_y P(x,y). Immutable.
class SspChain {
public:
    SspChain(MatrixXd p, VectorXd r, VectorXd zeta0)
        : p_(std::move(p)), r_(std::move(r)), zeta0_(std::move(zeta0)) {
        const ValidationReport rep = validate_parts(p_, r_, zeta0_);
        if (!rep.structural_ok) throw StructuralError(rep.messages.empty() ? "invalid chain" : rep.messages.front());
        if (!rep.distribution_ok) throw StructuralError("zeta0 is not a probability distribution");
        if (!rep.proper) throw PropernessError(rep.messages.empty() ? "chain is not proper" : rep.messages.back());
    }

    int n() const { return static_cast<int>(p_.rows()); }
    const MatrixXd& P() const { return p_; }
    const VectorXd& r() const { return r_; }
    const VectorXd& zeta0() const { return zeta0_; }

    /// Absorption probability from state x (0-based).
    double terminal_prob(int x) const { return std::max(0.0, 1.0 - p_.row(x).sum()); }

private:
    MatrixXd p_;
    VectorXd r_;
    VectorXd zeta0_;
};

inline ValidationReport validate(const SspChain& chain) {
    return validate_parts(chain.P(), chain.r(), chain.zeta0());
}

/// Expected visit counts before absorption; q solves (I - P^T) q = zeta0.
struct OccupancyWeights {
    VectorXd q;
    bool all_positive = false;
};

inline OccupancyWeights occupancy(const SspChain& chain) {
    const auto n = chain.n();
    const MatrixXd lhs = MatrixXd::Identity(n, n) - chain.P().transpose();
    Eigen::PartialPivLU<MatrixXd> lu(lhs);
    VectorXd q = lu.solve(chain.zeta0());
    const double resid = (lhs * q - chain.zeta0()).norm();
    if (!q.allFinite() || resid > 1e-10 * std::max(1.0, chain.zeta0().norm()))
        throw NumericalError("occupancy solve failed (residual " + std::to_string(resid) + ")");
    OccupancyWeights w;
    // Neumann series of a nonnegative matrix: tiny negative round-off is clamped.
    w.q = q.cwiseMax(0.0);
    w.all_positive = q.minCoeff() > 0.0;
    return w;
}

/// MDP with k actions before a policy is fixed; per-action rows are
/// substochastic exactly as in SspChain.
struct ActionMdp {
    int n = 0;
    int k = 0;
    std::vector<MatrixXd> P_a; // k matrices, n x n
    std::vector<VectorXd> r_a; // k vectors, length n
};

/// Policy-average the MDP into a chain. policy is n x k, rows are
/// distributions over actions.
inline SspChain compose(const ActionMdp& mdp, const MatrixXd& policy) {
    if (mdp.n < 1 || mdp.k < 1 || static_cast<int>(mdp.P_a.size()) != mdp.k ||
        static_cast<int>(mdp.r_a.size()) != mdp.k)
        throw StructuralError("ActionMdp has inconsistent shape");
    if (policy.rows() != mdp.n || policy.cols() != mdp.k)
        throw StructuralError("policy must be n x k");
    for (int x = 0; x < mdp.n; ++x) {
        if (policy.row(x).minCoeff() < 0.0 || std::abs(policy.row(x).sum() - 1.0) > kDistributionSlack)
            throw StructuralError("policy row " + std::to_string(x + 1) + " is not a distribution");
    }
    MatrixXd p = MatrixXd::Zero(mdp.n, mdp.n);
    VectorXd r = VectorXd::Zero(mdp.n);
    for (int a = 0; a < mdp.k; ++a) {
        if (mdp.P_a[a].rows() != mdp.n || mdp.P_a[a].cols() != mdp.n || mdp.r_a[a].size() != mdp.n)
            throw StructuralError("per-action matrices must be n x n / length n");
        p += policy.col(a).asDiagonal() * mdp.P_a[a];
        r += policy.col(a).cwiseProduct(mdp.r_a[a]);
    }
    VectorXd zeta0 = VectorXd::Ones(mdp.n) / mdp.n;
    return SspChain(std::move(p), std::move(r), std::move(zeta0));
}

inline SspChain compose(const ActionMdp& mdp, const MatrixXd& policy, VectorXd zeta0) {
    SspChain base = compose(mdp, policy);
    return SspChain(base.P(), base.r(), std::move(zeta0));
}

} // namespace vartd
