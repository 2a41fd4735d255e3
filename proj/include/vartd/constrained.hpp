#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "vartd/errors.hpp"
#include "vartd/exact.hpp"
#include "vartd/features.hpp"

namespace vartd {

/// Feasible set {w : Hw <= g} expressing phi_M(x)^T w >= (phi_J(x)^T w_J)^2
/// at the chosen states: row i of H is -phi_M(x_i)^T, g_i = -(phi_J(x_i)^T w_J)^2.
struct ConstraintSet {
    std::vector<int> states; // 1-based
    MatrixXd H;
    VectorXd g;
};

struct FeasibilityReport {
    bool strictly_feasible = false;
    bool unbounded = false; // LP max-margin unbounded (trivially feasible)
    double margin = 0.0;    // best s with Hw + s*1 <= g
    VectorXd witness;
};

struct IterationConfig {
    double gamma = 1.0; // initial step, halved on residual increase
    MatrixXd Xi;        // positive definite metric; empty means caller default
    double tol = 1e-9;
    std::int64_t max_iters = 100'000;
};

inline ConstraintSet build_constraints(const std::vector<int>& states, const FeatureSet& fs,
                                       const VectorXd& w_j_lambda) {
    if (states.empty()) throw StructuralError("constraint state list is empty");
    ConstraintSet cs;
    cs.states = states;
    cs.H = MatrixXd(states.size(), fs.l_M());
    cs.g = VectorXd(states.size());
    for (std::size_t i = 0; i < states.size(); ++i) {
        const int x = states[i];
        if (x < 1 || x > fs.n()) throw StructuralError("constraint state out of range: " + std::to_string(x));
        cs.H.row(static_cast<Eigen::Index>(i)) = -fs.Phi_M.row(x - 1);
        const double jv = fs.Phi_J.row(x - 1).dot(w_j_lambda);
        cs.g(static_cast<Eigen::Index>(i)) = -jv * jv;
    }
    return cs;
}

namespace detail {

/// Dense two-phase simplex for: max s subject to H w + s*1 <= g, w and s
/// free. Free variables are split into nonnegative pairs, slacks close the
/// rows. Bland's rule throughout. Desk-scale sizes only.
class MarginLp {
public:
    MarginLp(const MatrixXd& h, const VectorXd& g) : m_(static_cast<int>(h.rows())), d_(static_cast<int>(h.cols())) {
        // columns: u(d) v(d) a e slack(m) [artificials appended in phase 1]
        nstruct_ = 2 * d_ + 2 + m_;
        tab_ = MatrixXd::Zero(m_, nstruct_ + m_);
        rhs_ = g;
        for (int i = 0; i < m_; ++i) {
            for (int j = 0; j < d_; ++j) {
                tab_(i, j) = h(i, j);
                tab_(i, d_ + j) = -h(i, j);
            }
            tab_(i, 2 * d_) = 1.0;
            tab_(i, 2 * d_ + 1) = -1.0;
            tab_(i, 2 * d_ + 2 + i) = 1.0;
        }
        // normalize rhs >= 0
        for (int i = 0; i < m_; ++i) {
            if (rhs_(i) < 0.0) {
                tab_.row(i) *= -1.0;
                rhs_(i) *= -1.0;
            }
        }
        for (int i = 0; i < m_; ++i) tab_(i, nstruct_ + i) = 1.0;
        basis_.resize(static_cast<std::size_t>(m_));
        for (int i = 0; i < m_; ++i) basis_[static_cast<std::size_t>(i)] = nstruct_ + i;
    }

    FeasibilityReport solve() {
        FeasibilityReport rep;
        // phase 1: minimize sum of artificials
        VectorXd cost = VectorXd::Zero(tab_.cols());
        for (int j = nstruct_; j < tab_.cols(); ++j) cost(j) = 1.0;
        if (!run(cost, /*ncols=*/static_cast<int>(tab_.cols()), rep)) return rep; // cannot happen (bounded >= 0)
        if (objective(cost) > 1e-9) {
            // rows inconsistent; cannot happen for inequality systems
            rep.strictly_feasible = false;
            return rep;
        }
        pivot_out_artificials();
        // phase 2: maximize a - e  ==  minimize -a + e, artificials frozen
        VectorXd cost2 = VectorXd::Zero(tab_.cols());
        cost2(2 * d_) = -1.0;
        cost2(2 * d_ + 1) = 1.0;
        if (!run(cost2, nstruct_, rep)) {
            rep.unbounded = true;
            rep.strictly_feasible = true;
            extract(rep, /*push=*/true);
            return rep;
        }
        extract(rep, /*push=*/false);
        rep.strictly_feasible = rep.margin > 1e-10;
        return rep;
    }

private:
    double objective(const VectorXd& cost) const {
        double obj = 0.0;
        for (int i = 0; i < m_; ++i) obj += cost(basis_[static_cast<std::size_t>(i)]) * rhs_(i);
        return obj;
    }

    /// Bland's-rule simplex on columns [0, ncols). Returns false on
    /// unboundedness, filling ray_ with the improving direction column.
    bool run(const VectorXd& cost, int ncols, FeasibilityReport&) {
        for (std::int64_t iter = 0; iter < 100000; ++iter) {
            // reduced costs
            VectorXd y = VectorXd::Zero(m_);
            for (int i = 0; i < m_; ++i) y(i) = cost(basis_[static_cast<std::size_t>(i)]);
            int enter = -1;
            for (int j = 0; j < ncols; ++j) {
                const double red = cost(j) - y.dot(tab_.col(j));
                if (red < -1e-11) {
                    enter = j;
                    break;
                }
            }
            if (enter < 0) return true; // optimal
            int leave = -1;
            double best = std::numeric_limits<double>::infinity();
            for (int i = 0; i < m_; ++i) {
                if (tab_(i, enter) > 1e-12) {
                    const double ratio = rhs_(i) / tab_(i, enter);
                    if (ratio < best - 1e-12 ||
                        (ratio < best + 1e-12 &&
                         (leave < 0 || basis_[static_cast<std::size_t>(i)] < basis_[static_cast<std::size_t>(leave)]))) {
                        best = ratio;
                        leave = i;
                    }
                }
            }
            if (leave < 0) {
                ray_col_ = enter;
                return false; // unbounded
            }
            pivot(leave, enter);
        }
        throw ConvergenceError("simplex iteration cap reached");
    }

    void pivot(int row, int col) {
        const double piv = tab_(row, col);
        tab_.row(row) /= piv;
        rhs_(row) /= piv;
        for (int i = 0; i < m_; ++i) {
            if (i == row) continue;
            const double f = tab_(i, col);
            if (f != 0.0) {
                tab_.row(i) -= f * tab_.row(row);
                rhs_(i) -= f * rhs_(row);
            }
        }
        basis_[static_cast<std::size_t>(row)] = col;
    }

    void pivot_out_artificials() {
        for (int i = 0; i < m_; ++i) {
            if (basis_[static_cast<std::size_t>(i)] >= nstruct_) {
                for (int j = 0; j < nstruct_; ++j) {
                    if (std::abs(tab_(i, j)) > 1e-9) {
                        pivot(i, j);
                        break;
                    }
                }
            }
        }
    }

    void extract(FeasibilityReport& rep, bool push) const {
        VectorXd x = VectorXd::Zero(tab_.cols());
        for (int i = 0; i < m_; ++i) x(basis_[static_cast<std::size_t>(i)]) = rhs_(i);
        if (push) {
            // march along the unbounded ray far enough that s >= 1
            VectorXd dir = VectorXd::Zero(tab_.cols());
            dir(ray_col_) = 1.0;
            for (int i = 0; i < m_; ++i) dir(basis_[static_cast<std::size_t>(i)]) = -tab_(i, ray_col_);
            double theta = 1.0;
            auto s_of = [&](const VectorXd& v) { return v(2 * d_) - v(2 * d_ + 1); };
            VectorXd cand = x + theta * dir;
            while (s_of(cand) < 1.0 && theta < 1e12) {
                theta *= 2.0;
                cand = x + theta * dir;
            }
            x = cand;
        }
        rep.witness = VectorXd(d_);
        for (int j = 0; j < d_; ++j) rep.witness(j) = x(j) - x(d_ + j);
        rep.margin = x(2 * d_) - x(2 * d_ + 1);
    }

    int m_, d_, nstruct_;
    int ray_col_ = -1;
    MatrixXd tab_;
    VectorXd rhs_;
    std::vector<int> basis_;
};

} // namespace detail

/// Assumption check: solves max s s.t. Hw + s*1 <= g. Strict interior exists
/// iff the optimal margin is positive (an unbounded LP counts as feasible).
inline FeasibilityReport check_feasibility(const ConstraintSet& cs) {
    detail::MarginLp lp(cs.H, cs.g);
    return lp.solve();
}

/// Xi-weighted projection onto {v : Hv <= g} by Hildreth's dual coordinate
/// ascent: v = w - Xi^-1 H^T mu with mu >= 0 updated one constraint at a
/// time. Converges for feasible polyhedra; throws after 1e5 sweeps.
inline VectorXd project_polyhedron(const VectorXd& w, const MatrixXd& xi, const ConstraintSet& cs) {
    const auto l = cs.H.rows();
    Eigen::LLT<MatrixXd> llt(xi);
    if (llt.info() != Eigen::Success) throw StructuralError("Xi must be symmetric positive definite");
    const MatrixXd xinv_ht = llt.solve(cs.H.transpose()); // Xi^-1 H^T
    const MatrixXd gram = cs.H * xinv_ht;                 // H Xi^-1 H^T
    const VectorXd h = cs.H * w - cs.g;                   // positive entries are violations
    if (h.maxCoeff() <= 0.0) return w;                    // already feasible
    VectorXd mu = VectorXd::Zero(l);
    const double scale = std::max(1.0, cs.g.cwiseAbs().maxCoeff()) + w.cwiseAbs().maxCoeff();
    for (std::int64_t sweep = 0; sweep < 100'000; ++sweep) {
        double change = 0.0;
        for (Eigen::Index i = 0; i < l; ++i) {
            if (gram(i, i) <= 1e-30) continue; // zero feature row: constraint is constant
            const double target = (h(i) - gram.row(i).dot(mu) + gram(i, i) * mu(i)) / gram(i, i);
            const double next = std::max(0.0, target);
            change = std::max(change, std::abs(next - mu(i)));
            mu(i) = next;
        }
        if (change < 1e-14 * (1.0 + mu.cwiseAbs().maxCoeff())) {
            const VectorXd v = w - xinv_ht * mu;
            // KKT residual: primal feasibility + complementary slackness
            const VectorXd slack = cs.H * v - cs.g;
            double kkt = std::max(0.0, slack.maxCoeff());
            for (Eigen::Index i = 0; i < l; ++i) kkt = std::max(kkt, std::abs(mu(i) * slack(i)) / (1.0 + scale));
            if (kkt <= 1e-10 * std::max(1.0, scale)) return v;
        }
    }
    throw ConvergenceError("Hildreth projection did not converge (degenerate constraints?)");
}

struct ConstrainedResult {
    VectorXd w_vc;
    EvalResult eval;
    std::vector<double> residuals; // ||w_{k+1} - w_k||_Xi per iteration
    double gamma_final = 0.0;
    std::int64_t iters = 0;
};

/// Projected iteration for the variance-constrained second-moment equation:
///   w_{k+1} = Proj_{Xi, Hw<=g} [ w_k - gamma Xi^-1 (C^(lambda) w_k - d^(lambda)) ]
/// gamma starts at cfg.gamma and is halved whenever the Xi-norm step
/// residual increases. Requires lambda > 0.
inline ConstrainedResult constrained_solve(const ProjectedSystem& sys, const FeatureSet& fs,
                                           const VectorXd& w_j_lambda, const ConstraintSet& cs,
                                           IterationConfig cfg) {
    if (!(sys.lambda > 0.0)) throw StructuralError("constrained_solve requires lambda > 0");
    if (cfg.Xi.size() == 0) throw StructuralError("IterationConfig.Xi must be set");
    if (!(cfg.gamma > 0.0)) throw StructuralError("gamma must be > 0");
    Eigen::LLT<MatrixXd> llt(cfg.Xi);
    if (llt.info() != Eigen::Success) throw StructuralError("Xi must be symmetric positive definite");

    const FeasibilityReport feas = check_feasibility(cs);
    if (!feas.strictly_feasible)
        throw StructuralError("constraint polyhedron has no strict interior (Assumption 5 fails)");

    VectorXd w = sys.C.partialPivLu().solve(sys.d); // start at the unconstrained fixed point
    double gamma = cfg.gamma;
    double prev_resid = std::numeric_limits<double>::infinity();
    ConstrainedResult out;
    for (std::int64_t k = 0; k < cfg.max_iters; ++k) {
        const VectorXd grad = sys.C * w - sys.d;
        const VectorXd cand = w - gamma * llt.solve(grad);
        const VectorXd next = project_polyhedron(cand, cfg.Xi, cs);
        const VectorXd step = next - w;
        const double resid = std::sqrt(step.dot(cfg.Xi * step));
        out.residuals.push_back(resid);
        if (resid > prev_resid) gamma *= 0.5;
        prev_resid = resid;
        w = next;
        ++out.iters;
        if (resid <= cfg.tol) {
            out.w_vc = w;
            out.gamma_final = gamma;
            out.eval = make_eval_result(fs, w_j_lambda, w);
            return out;
        }
    }
    throw ConvergenceError("constrained iteration hit max_iters (" + std::to_string(cfg.max_iters) +
                           "); last residual " + std::to_string(out.residuals.back()) +
                           " -- try a smaller gamma");
}

/// The q-weighted Gram metric Phi_M^T Q Phi_M, the default Xi.
inline MatrixXd default_xi(const FeatureSet& fs, const VectorXd& q) {
    return fs.Phi_M.transpose() * q.asDiagonal() * fs.Phi_M;
}

} // namespace vartd
