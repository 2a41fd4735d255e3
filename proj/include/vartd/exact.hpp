#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <utility>

#include "vartd/errors.hpp"
#include "vartd/features.hpp"
#include "vartd/mdp.hpp"

namespace vartd {

inline constexpr double kConditionLimit = 1e12;

/// Exact J, M and V = M - J^2 from each start state.
struct TrueMoments {
    VectorXd J;
    VectorXd M;
    VectorXd V;
};

/// Matrices of the projected linear systems A w_J = b, C w_M = d
/// (single-step at lambda = 0, multistep otherwise).
struct ProjectedSystem {
    double lambda = 0.0;
    MatrixXd A;
    VectorXd b;
    MatrixXd C;
    VectorXd d;
    double cond_A = 0.0;
    double cond_C = 0.0;
    MatrixXd P_lambda; // cached multistep transition matrix
};

struct DiagnosticsReport {
    double rho_single = 0.0;       // spectral radius of the 2n x 2n projected joint map
    double rho_J = 0.0;            // spectral radius of Pi_J P^(lambda)
    double rho_M = 0.0;            // spectral radius of Pi_M P^(lambda)
    double error_bound_lhs = 0.0;  // blockwise q-norm distance of z* from the true (J, M)
    double error_bound_rhs = 0.0;  // 1/(1-beta) times the projection error, beta = rho_single
};

namespace detail {

inline double condition_number(const MatrixXd& m) {
    Eigen::JacobiSVD<MatrixXd> svd(m);
    const auto& sv = svd.singularValues();
    const double smallest = sv(sv.size() - 1);
    if (smallest <= 0.0) return std::numeric_limits<double>::infinity();
    return sv(0) / smallest;
}

inline double spectral_radius_exact(const MatrixXd& m) {
    Eigen::EigenSolver<MatrixXd> es(m, /*computeEigenvectors=*/false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// q-weighted orthogonal projection matrix Phi (Phi^T Q Phi)^-1 Phi^T Q.
inline MatrixXd projection_matrix(const MatrixXd& phi, const VectorXd& q) {
    const MatrixXd gram = phi.transpose() * q.asDiagonal() * phi;
    return phi * gram.llt().solve(phi.transpose() * q.asDiagonal().toDenseMatrix());
}

inline double q_norm(const VectorXd& v, const VectorXd& q) {
    return std::sqrt(q.dot(v.cwiseProduct(v)));
}

} // namespace detail

/// Exact solution of the coupled linear equations for J and M:
/// (I-P) J = r and (I-P) M = Rr + 2RPJ with R = diag(r).
inline TrueMoments solve_true(const SspChain& chain) {
    const int n = chain.n();
    const MatrixXd lhs = MatrixXd::Identity(n, n) - chain.P();
    Eigen::PartialPivLU<MatrixXd> lu(lhs);
    const VectorXd& r = chain.r();
    TrueMoments tm;
    tm.J = lu.solve(r);
    const VectorXd rhs_m = r.cwiseProduct(r) + 2.0 * r.cwiseProduct(chain.P() * tm.J);
    tm.M = lu.solve(rhs_m);
    const double scale_j = std::max(1.0, r.norm());
    const double scale_m = std::max(1.0, rhs_m.norm());
    if ((lhs * tm.J - r).norm() > 1e-10 * scale_j || (lhs * tm.M - rhs_m).norm() > 1e-10 * scale_m)
        throw NumericalError("solve_true residual too large; chain close to improper");
    tm.V = tm.M - tm.J.cwiseProduct(tm.J);
    return tm;
}

/// Solves the projected fixed-point systems. At lambda = 0 the matrices are
/// A = Phi_J^T Q (I-P) Phi_J, b = Phi_J^T Q r, C likewise with Phi_M and
/// d = Phi_M^T Q R (r + 2 P Phi_J w_J); for lambda > 0 the multistep
/// P^(lambda) = (1-lambda)(I-lambda P)^-1 P replaces P and r, d pick up
/// the (I-lambda P)^-1 resolvent.
inline std::pair<ProjectedSystem, EvalResult> projected_solution(const SspChain& chain, const FeatureSet& fs,
                                                                double lambda) {
    if (!(lambda >= 0.0 && lambda < 1.0)) throw StructuralError("lambda must be in [0,1)");
    if (fs.n() != chain.n()) throw StructuralError("feature rows must match state count");
    const int n = chain.n();
    const OccupancyWeights occ = occupancy(chain);
    if (!occ.all_positive)
        throw StructuralError("occupancy weights must be positive at every state (Assumption 3)");
    const VectorXd& q = occ.q;
    const MatrixXd& p = chain.P();
    const VectorXd& r = chain.r();

    MatrixXd p_lambda;
    VectorXd r_lambda; // (I - lambda P)^-1 r
    VectorXd m_source; // (I - lambda P)^-1 R (r + 2 P Phi_J w_J), filled below
    if (lambda == 0.0) {
        p_lambda = p;
        r_lambda = r;
    } else {
        Eigen::PartialPivLU<MatrixXd> lu(MatrixXd::Identity(n, n) - lambda * p);
        p_lambda = (1.0 - lambda) * lu.solve(p);
        r_lambda = lu.solve(r);
    }

    ProjectedSystem sys;
    sys.lambda = lambda;
    sys.P_lambda = p_lambda;
    const MatrixXd q_diag = q.asDiagonal();
    sys.A = fs.Phi_J.transpose() * q_diag * (MatrixXd::Identity(n, n) - p_lambda) * fs.Phi_J;
    sys.b = fs.Phi_J.transpose() * q.cwiseProduct(r_lambda);
    sys.C = fs.Phi_M.transpose() * q_diag * (MatrixXd::Identity(n, n) - p_lambda) * fs.Phi_M;
    sys.cond_A = detail::condition_number(sys.A);
    sys.cond_C = detail::condition_number(sys.C);
    if (sys.cond_A > kConditionLimit) throw NumericalError("projected system matrix A is ill-conditioned");

    const VectorXd w_j = sys.A.partialPivLu().solve(sys.b);

    VectorXd m_rhs = r.cwiseProduct(r + 2.0 * (p * (fs.Phi_J * w_j)));
    if (lambda == 0.0) {
        m_source = m_rhs;
    } else {
        Eigen::PartialPivLU<MatrixXd> lu(MatrixXd::Identity(n, n) - lambda * p);
        m_source = lu.solve(m_rhs);
    }
    sys.d = fs.Phi_M.transpose() * q.cwiseProduct(m_source);
    if (sys.cond_C > kConditionLimit) throw NumericalError("projected system matrix C is ill-conditioned");
    const VectorXd w_m = sys.C.partialPivLu().solve(sys.d);

    EvalResult res = make_eval_result(fs, w_j, w_m);

    if (lambda == 0.0) {
        // internal fixed-point check: z* = Pi T z*
        const MatrixXd pi_j = detail::projection_matrix(fs.Phi_J, q);
        const MatrixXd pi_m = detail::projection_matrix(fs.Phi_M, q);
        const VectorXd tj = r + p * res.J_tilde;
        const VectorXd tm = r.cwiseProduct(r) + 2.0 * r.cwiseProduct(p * res.J_tilde) + p * res.M_tilde;
        const double resid = (pi_j * tj - res.J_tilde).norm() + (pi_m * tm - res.M_tilde).norm();
        const double scale = std::max(1.0, res.J_tilde.norm() + res.M_tilde.norm());
        if (resid > 1e-8 * scale)
            throw NumericalError("projected fixed point residual too large: " + std::to_string(resid));
    }
    return {std::move(sys), std::move(res)};
}

/// Numerical restatement of the contraction and error-bound lemmas: spectral
/// radii of the projected maps, and both sides of the error bound in the
/// blockwise q-norm with alpha = 1/2 (reported, not asserted).
inline DiagnosticsReport diagnostics(const SspChain& chain, const FeatureSet& fs, double lambda) {
    const int n = chain.n();
    const OccupancyWeights occ = occupancy(chain);
    if (!occ.all_positive)
        throw StructuralError("occupancy weights must be positive at every state (Assumption 3)");
    const VectorXd& q = occ.q;
    const MatrixXd& p = chain.P();
    const MatrixXd pi_j = detail::projection_matrix(fs.Phi_J, q);
    const MatrixXd pi_m = detail::projection_matrix(fs.Phi_M, q);

    auto [sys, res] = projected_solution(chain, fs, lambda);
    const MatrixXd& p_lambda = sys.P_lambda;

    DiagnosticsReport rep;
    rep.rho_J = detail::spectral_radius_exact(pi_j * p_lambda);
    rep.rho_M = detail::spectral_radius_exact(pi_m * p_lambda);

    // single-step joint map Pi P_cal = [[Pi_J P, 0], [2 Pi_M R P, Pi_M P]]
    MatrixXd joint = MatrixXd::Zero(2 * n, 2 * n);
    joint.topLeftCorner(n, n) = pi_j * p;
    joint.bottomLeftCorner(n, n) = 2.0 * pi_m * chain.r().asDiagonal() * p;
    joint.bottomRightCorner(n, n) = pi_m * p;
    rep.rho_single = detail::spectral_radius_exact(joint);

    const TrueMoments tm = solve_true(chain);
    rep.error_bound_lhs = 0.5 * detail::q_norm(tm.J - res.J_tilde, q) + 0.5 * detail::q_norm(tm.M - res.M_tilde, q);
    const double proj_err =
        0.5 * detail::q_norm(tm.J - pi_j * tm.J, q) + 0.5 * detail::q_norm(tm.M - pi_m * tm.M, q);
    const double beta = rep.rho_single;
    rep.error_bound_rhs = beta < 1.0 ? proj_err / (1.0 - beta) : std::numeric_limits<double>::infinity();
    return rep;
}

} // namespace vartd
