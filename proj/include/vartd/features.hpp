#pragma once

#include <Eigen/Dense>
#include <Eigen/QR>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "vartd/errors.hpp"

namespace vartd {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double kRankTolerance = 1e-8;   // smallest/largest singular value
inline constexpr double kDeadColumnTol = 1e-12;  // q-weighted column norm

namespace detail {

inline bool full_column_rank(const MatrixXd& m) {
    if (m.cols() == 0 || m.cols() > m.rows()) return false;
    Eigen::JacobiSVD<MatrixXd> svd(m);
    const auto& sv = svd.singularValues();
    return sv(sv.size() - 1) > kRankTolerance * sv(0);
}

} // namespace detail

/// Linear architecture for J and M: Phi_J is n x l_J with rows phi_J(x)^T,
/// likewise Phi_M. Construction enforces full column rank on both.
struct FeatureSet {
    MatrixXd Phi_J;
    MatrixXd Phi_M;

    FeatureSet(MatrixXd phi_j, MatrixXd phi_m)
        : Phi_J(std::move(phi_j)), Phi_M(std::move(phi_m)) {
        if (Phi_J.rows() != Phi_M.rows()) throw StructuralError("Phi_J and Phi_M must have the same row count");
        if (!Phi_J.allFinite() || !Phi_M.allFinite()) throw StructuralError("feature matrices must be finite");
        if (!detail::full_column_rank(Phi_J)) throw StructuralError("Phi_J is rank deficient");
        if (!detail::full_column_rank(Phi_M)) throw StructuralError("Phi_M is rank deficient");
    }

    int n() const { return static_cast<int>(Phi_J.rows()); }
    int l_J() const { return static_cast<int>(Phi_J.cols()); }
    int l_M() const { return static_cast<int>(Phi_M.cols()); }

    VectorXd phi_J(int x) const { return Phi_J.row(x).transpose(); }
    VectorXd phi_M(int x) const { return Phi_M.row(x).transpose(); }
};

/// Weight vectors plus the per-state values they induce. V_tilde is exactly
/// M_tilde - J_tilde^2, never clamped here.
struct EvalResult {
    VectorXd w_J;
    VectorXd w_M;
    VectorXd J_tilde;
    VectorXd M_tilde;
    VectorXd V_tilde;
};

inline EvalResult make_eval_result(const FeatureSet& fs, VectorXd w_j, VectorXd w_m) {
    EvalResult res;
    res.J_tilde = fs.Phi_J * w_j;
    res.M_tilde = fs.Phi_M * w_m;
    res.V_tilde = res.M_tilde - res.J_tilde.cwiseProduct(res.J_tilde);
    res.w_J = std::move(w_j);
    res.w_M = std::move(w_m);
    return res;
}

/// Exact-representation baseline: identity features for both J and M.
inline FeatureSet tabular(int n) {
    if (n < 1) throw StructuralError("tabular features need n >= 1");
    return FeatureSet(MatrixXd::Identity(n, n), MatrixXd::Identity(n, n));
}

/// Row for state x (1-based) is (1, xb, xb^2, ...) with xb = x/n.
inline MatrixXd polynomial_matrix(int n, int degree) {
    MatrixXd phi(n, degree + 1);
    for (int x = 1; x <= n; ++x) {
        const double xb = static_cast<double>(x) / n;
        double pow = 1.0;
        for (int d = 0; d <= degree; ++d) {
            phi(x - 1, d) = pow;
            pow *= xb;
        }
    }
    return phi;
}

inline FeatureSet polynomial(int n, int degree_j, int degree_m) {
    if (degree_j < 0 || degree_m < 0) throw StructuralError("polynomial degree must be >= 0");
    return FeatureSet(polynomial_matrix(n, degree_j), polynomial_matrix(n, degree_m));
}

/// Drop columns that are dead under q (weighted norm < kDeadColumnTol), then
/// drop linearly dependent columns via column-pivoted QR on sqrt(q)-scaled
/// features. Original column order is preserved among survivors.
inline MatrixXd rank_repair(const MatrixXd& phi, const VectorXd& q) {
    if (phi.rows() != q.size()) throw StructuralError("rank_repair: q length must match feature rows");
    const VectorXd sq = q.cwiseMax(0.0).cwiseSqrt();
    std::vector<int> alive;
    for (int c = 0; c < phi.cols(); ++c) {
        if ((sq.cwiseProduct(phi.col(c))).norm() >= kDeadColumnTol) alive.push_back(c);
    }
    MatrixXd weighted(phi.rows(), static_cast<int>(alive.size()));
    for (int i = 0; i < static_cast<int>(alive.size()); ++i)
        weighted.col(i) = sq.cwiseProduct(phi.col(alive[static_cast<std::size_t>(i)]));
    Eigen::ColPivHouseholderQR<MatrixXd> qr(weighted);
    qr.setThreshold(kRankTolerance);
    const int rank = static_cast<int>(qr.rank());
    std::vector<int> keep;
    const auto& perm = qr.colsPermutation().indices();
    for (int i = 0; i < rank; ++i) keep.push_back(alive[static_cast<std::size_t>(perm(i))]);
    std::sort(keep.begin(), keep.end());
    MatrixXd out(phi.rows(), rank);
    for (int i = 0; i < rank; ++i) out.col(i) = phi.col(keep[static_cast<std::size_t>(i)]);
    return out;
}

struct TileSpec {
    int tiles_x = 1;
    int tiles_y = 1;
    double x0 = 0.0, y0 = 0.0, x1 = 1.0, y1 = 1.0; // coordinate box
    bool append_constant = true;
};

/// Non-overlapping tile indicators over a 2-D coordinate box, one row per
/// state, with a constant all-ones column appended (Assumption 5 support).
/// Rank repair against q removes unvisited tiles and any redundant column.
inline FeatureSet tile_coding(const TileSpec& spec, const std::vector<std::pair<double, double>>& coords,
                              const VectorXd& q) {
    if (spec.tiles_x < 1 || spec.tiles_y < 1) throw StructuralError("tile counts must be >= 1");
    const int n = static_cast<int>(coords.size());
    const int l = spec.tiles_x * spec.tiles_y + (spec.append_constant ? 1 : 0);
    MatrixXd phi = MatrixXd::Zero(n, l);
    const double wx = (spec.x1 - spec.x0) / spec.tiles_x;
    const double wy = (spec.y1 - spec.y0) / spec.tiles_y;
    for (int s = 0; s < n; ++s) {
        const auto [cx, cy] = coords[static_cast<std::size_t>(s)];
        if (cx < spec.x0 || cx > spec.x1 || cy < spec.y0 || cy > spec.y1)
            throw StructuralError("state coordinate outside the tile box");
        int tx = std::min(spec.tiles_x - 1, static_cast<int>((cx - spec.x0) / wx));
        int ty = std::min(spec.tiles_y - 1, static_cast<int>((cy - spec.y0) / wy));
        phi(s, tx * spec.tiles_y + ty) = 1.0;
        if (spec.append_constant) phi(s, l - 1) = 1.0;
    }
    MatrixXd repaired = rank_repair(phi, q);
    return FeatureSet(repaired, repaired);
}

} // namespace vartd
