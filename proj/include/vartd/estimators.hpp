#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "vartd/errors.hpp"
#include "vartd/exact.hpp"
#include "vartd/features.hpp"
#include "vartd/mdp.hpp"
#include "vartd/rng.hpp"
#include "vartd/simulate.hpp"

namespace vartd {

/// One-pass sufficient statistics for LSTD / LSTD(lambda). d_N is never
/// stored directly: it is reconstructed as raw2 + 2 * D_cross * (A^-1 b),
/// which matches the nested definition exactly because A^-1 b is constant
/// across the empirical average. Merge is associative on the sums.
struct LstdAccumulator {
    double lambda = 0.0;
    std::int64_t N = 0;
    MatrixXd A_sum;       // sum over episodes of sum_t z^J_t (phi_J(x_t) - phi_J(x_{t+1}))^T
    VectorXd b_sum;       // sum of z^J_t r(x_t)
    MatrixXd C_sum;       // analogous with z^M and phi_M
    VectorXd raw2_sum;    // sum of z^M_t r(x_t)^2
    MatrixXd D_cross_sum; // sum of z^M_t r(x_t) phi_J(x_{t+1})^T

    LstdAccumulator(int l_j, int l_m, double lam)
        : lambda(lam),
          A_sum(MatrixXd::Zero(l_j, l_j)),
          b_sum(VectorXd::Zero(l_j)),
          C_sum(MatrixXd::Zero(l_m, l_m)),
          raw2_sum(VectorXd::Zero(l_m)),
          D_cross_sum(MatrixXd::Zero(l_m, l_j)) {}

    void add_episode(const Trajectory& traj, const FeatureSet& fs) {
        VectorXd z_j = VectorXd::Zero(A_sum.rows());
        VectorXd z_m = VectorXd::Zero(C_sum.rows());
        const std::size_t tau = traj.states.size();
        for (std::size_t t = 0; t < tau; ++t) {
            const int x = traj.states[t];
            const double rt = traj.rewards[t];
            z_j = lambda * z_j + fs.Phi_J.row(x).transpose();
            z_m = lambda * z_m + fs.Phi_M.row(x).transpose();
            if (t + 1 < tau) {
                const int y = traj.states[t + 1];
                A_sum += z_j * (fs.Phi_J.row(x) - fs.Phi_J.row(y));
                C_sum += z_m * (fs.Phi_M.row(x) - fs.Phi_M.row(y));
                D_cross_sum += rt * z_m * fs.Phi_J.row(y);
            } else { // next state is terminal, phi = 0
                A_sum += z_j * fs.Phi_J.row(x);
                C_sum += z_m * fs.Phi_M.row(x);
            }
            b_sum += rt * z_j;
            raw2_sum += rt * rt * z_m;
        }
        ++N;
    }

    void merge(const LstdAccumulator& other) {
        A_sum += other.A_sum;
        b_sum += other.b_sum;
        C_sum += other.C_sum;
        raw2_sum += other.raw2_sum;
        D_cross_sum += other.D_cross_sum;
        N += other.N;
    }

    MatrixXd A_N() const { return A_sum / static_cast<double>(N); }
    VectorXd b_N() const { return b_sum / static_cast<double>(N); }
    MatrixXd C_N() const { return C_sum / static_cast<double>(N); }
    VectorXd d_N(const VectorXd& w_j) const {
        return (raw2_sum + 2.0 * D_cross_sum * w_j) / static_cast<double>(N);
    }
};

namespace detail {

inline VectorXd solve_sampled(const MatrixXd& m, const VectorXd& rhs, std::int64_t n_episodes, const char* name) {
    const double cond = condition_number(m);
    if (!std::isfinite(cond) || cond > kConditionLimit)
        throw DataDeficiencyError(std::string("sampled matrix ") + name + " is singular or ill-conditioned (N=" +
                                  std::to_string(n_episodes) + ", cond=" + std::to_string(cond) + ")");
    return m.partialPivLu().solve(rhs);
}

} // namespace detail

/// LSTD(lambda) from complete trajectories via per-episode eligibility
/// traces z_t = lambda z_{t-1} + phi(x_t), reset at episode boundaries.
/// lambda = 0 degenerates to the single-step LSTD sums bit-for-bit.
inline std::pair<EvalResult, LstdAccumulator> lstd_lambda(const std::vector<Trajectory>& trajectories,
                                                          const FeatureSet& fs, double lambda) {
    if (!(lambda >= 0.0 && lambda < 1.0)) throw StructuralError("lambda must be in [0,1)");
    if (trajectories.empty()) throw DataDeficiencyError("lstd needs at least one episode");
    LstdAccumulator acc(fs.l_J(), fs.l_M(), lambda);
    for (const auto& traj : trajectories) acc.add_episode(traj, fs);
    const VectorXd w_j = detail::solve_sampled(acc.A_N(), acc.b_N(), acc.N, "A_N");
    const VectorXd w_m = detail::solve_sampled(acc.C_N(), acc.d_N(w_j), acc.N, "C_N");
    return {make_eval_result(fs, w_j, w_m), std::move(acc)};
}

inline std::pair<EvalResult, LstdAccumulator> lstd(const std::vector<Trajectory>& trajectories,
                                                   const FeatureSet& fs) {
    return lstd_lambda(trajectories, fs, 0.0);
}

/// Robbins-Monro step schedule xi_k = c / (k + k0). The harmonic family
/// satisfies sum xi = inf and sum xi^2 < inf for any c > 0, k0 >= 1.
class StepSchedule {
public:
    static StepSchedule harmonic(double c, double k0) {
        if (!(c > 0.0)) throw StructuralError("step scale c must be > 0");
        if (!(k0 >= 1.0)) throw StructuralError("step offset k0 must be >= 1");
        return StepSchedule(c, k0);
    }

    double operator()(std::int64_t k) const { return c_ / (static_cast<double>(k) + k0_); }
    double c() const { return c_; }
    double k0() const { return k0_; }

private:
    StepSchedule(double c, double k0) : c_(c), k0_(k0) {}
    double c_;
    double k0_;
};

struct TdState {
    VectorXd w_J;
    VectorXd w_M;
    std::int64_t k = 0;
};

struct TdOptions {
    std::int64_t k_max = 1;
    std::int64_t max_steps = kDefaultMaxSteps;
    std::int64_t record_stride = 1; // keep every stride-th iterate (final always kept)
    double divergence_scale = 1.0;  // estimate of ||w*|| for the divergence guard
};

namespace detail {

/// Accumulates the per-episode TD(0) update sums
///   sum_t phi_J(x_t) delta_J(t),  sum_t phi_M(x_t) delta_M(t)
/// at the given weights, with phi(terminal) = 0.
inline void td0_episode_sums(const Trajectory& traj, const FeatureSet& fs, const VectorXd& w_j,
                             const VectorXd& w_m, VectorXd& upd_j, VectorXd& upd_m) {
    upd_j.setZero();
    upd_m.setZero();
    const std::size_t tau = traj.states.size();
    for (std::size_t t = 0; t < tau; ++t) {
        const int x = traj.states[t];
        const double rt = traj.rewards[t];
        double phi_j_next_w = 0.0;
        double phi_m_next_w = 0.0;
        if (t + 1 < tau) {
            const int y = traj.states[t + 1];
            phi_j_next_w = fs.Phi_J.row(y).dot(w_j);
            phi_m_next_w = fs.Phi_M.row(y).dot(w_m);
        }
        const double delta_j = rt + phi_j_next_w - fs.Phi_J.row(x).dot(w_j);
        const double delta_m = rt * rt + 2.0 * rt * phi_j_next_w + phi_m_next_w - fs.Phi_M.row(x).dot(w_m);
        upd_j += fs.Phi_J.row(x).transpose() * delta_j;
        upd_m += fs.Phi_M.row(x).transpose() * delta_m;
    }
}

} // namespace detail

/// Episode-batch TD(0): after each completed episode k applies
///   w += xi_k * (per-episode TD-error sums),
/// episodes drawn live from the chain with per-episode streams (seed, k).
/// Single-threaded by contract (iterate dependence).
inline std::vector<TdState> td0(const SspChain& chain, const FeatureSet& fs, const StepSchedule& schedule,
                                const TdOptions& opts, std::uint64_t seed) {
    if (opts.k_max < 1) throw StructuralError("k_max must be >= 1");
    VectorXd w_j = VectorXd::Zero(fs.l_J());
    VectorXd w_m = VectorXd::Zero(fs.l_M());
    VectorXd upd_j(fs.l_J()), upd_m(fs.l_M());
    const double guard = 1e6 * (1.0 + opts.divergence_scale);
    const std::int64_t stride = std::max<std::int64_t>(1, opts.record_stride);
    std::vector<TdState> history;
    for (std::int64_t k = 0; k < opts.k_max; ++k) {
        SplitRng rng(seed, static_cast<std::uint64_t>(k));
        const Trajectory traj = sample_trajectory(chain, rng, opts.max_steps);
        detail::td0_episode_sums(traj, fs, w_j, w_m, upd_j, upd_m);
        const double xi = schedule(k);
        w_j += xi * upd_j;
        w_m += xi * upd_m;
        if (w_j.norm() + w_m.norm() > guard)
            throw DivergenceError("TD(0) weights exceeded the divergence guard at episode " + std::to_string(k));
        if (k % stride == 0 || k == opts.k_max - 1) history.push_back({w_j, w_m, k + 1});
    }
    return history;
}

/// Offline variant over a fixed batch of trajectories, consumed in order.
inline std::vector<TdState> td0(const std::vector<Trajectory>& trajectories, const FeatureSet& fs,
                                const StepSchedule& schedule, const TdOptions& opts) {
    if (opts.k_max < 1) throw StructuralError("k_max must be >= 1");
    VectorXd w_j = VectorXd::Zero(fs.l_J());
    VectorXd w_m = VectorXd::Zero(fs.l_M());
    VectorXd upd_j(fs.l_J()), upd_m(fs.l_M());
    const double guard = 1e6 * (1.0 + opts.divergence_scale);
    const std::int64_t stride = std::max<std::int64_t>(1, opts.record_stride);
    std::vector<TdState> history;
    std::int64_t k = 0;
    for (const auto& traj : trajectories) {
        if (k >= opts.k_max) break;
        detail::td0_episode_sums(traj, fs, w_j, w_m, upd_j, upd_m);
        const double xi = schedule(k);
        w_j += xi * upd_j;
        w_m += xi * upd_m;
        if (w_j.norm() + w_m.norm() > guard)
            throw DivergenceError("TD(0) weights exceeded the divergence guard at episode " + std::to_string(k));
        if (k % stride == 0 || k + 1 == opts.k_max) history.push_back({w_j, w_m, k + 1});
        ++k;
    }
    return history;
}

/// Expected TD(0) update at fixed weights, built in closed form from the
/// chain: returns (M_matrix, z) with the update being z + M_matrix w on the
/// stacked (w_J, w_M) vector. Eigenvalues of M_matrix have negative real
/// part, and z + M_matrix w* = 0 at the fixed point.
inline std::pair<MatrixXd, VectorXd> expected_update_system(const SspChain& chain, const FeatureSet& fs) {
    const OccupancyWeights occ = occupancy(chain);
    const VectorXd& q = occ.q;
    const int lj = fs.l_J();
    const int lm = fs.l_M();
    const MatrixXd pm_i = chain.P() - MatrixXd::Identity(chain.n(), chain.n());
    MatrixXd m = MatrixXd::Zero(lj + lm, lj + lm);
    m.topLeftCorner(lj, lj) = fs.Phi_J.transpose() * q.asDiagonal() * pm_i * fs.Phi_J;
    m.bottomLeftCorner(lm, lj) =
        2.0 * fs.Phi_M.transpose() * q.asDiagonal() * chain.r().asDiagonal() * chain.P() * fs.Phi_J;
    m.bottomRightCorner(lm, lm) = fs.Phi_M.transpose() * q.asDiagonal() * pm_i * fs.Phi_M;
    VectorXd z(lj + lm);
    z.head(lj) = fs.Phi_J.transpose() * q.cwiseProduct(chain.r());
    z.tail(lm) = fs.Phi_M.transpose() * q.cwiseProduct(chain.r().cwiseProduct(chain.r()));
    return {std::move(m), std::move(z)};
}

} // namespace vartd
