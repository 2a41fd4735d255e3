#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "vartd/errors.hpp"
#include "vartd/mdp.hpp"
#include "vartd/rng.hpp"

namespace vartd {

inline constexpr std::int64_t kDefaultMaxSteps = 1'000'000;

/// One complete episode: states visited before absorption (0-based),
/// matching rewards, tau = episode length, B = total reward.
struct Trajectory {
    std::vector<int> states;
    std::vector<double> rewards;
    std::int64_t tau = 0;
    double B = 0.0;
};

namespace detail {

inline int sample_categorical(const VectorXd& weights, double u) {
    // u in [0,1); returns index, or -1 when u lands past the total mass.
    double acc = 0.0;
    for (Eigen::Index i = 0; i < weights.size(); ++i) {
        acc += weights(i);
        if (u < acc) return static_cast<int>(i);
    }
    return -1;
}

} // namespace detail

/// Simulates one episode from a fixed start state. Throws TruncationError
/// past max_steps.
inline Trajectory sample_trajectory_from(const SspChain& chain, int start_state, SplitRng& rng,
                                         std::int64_t max_steps = kDefaultMaxSteps) {
    if (max_steps < 1) throw StructuralError("max_steps must be >= 1");
    if (start_state < 0 || start_state >= chain.n()) throw StructuralError("start state out of range");
    Trajectory traj;
    int x = start_state;
    for (;;) {
        if (traj.tau >= max_steps)
            throw TruncationError("episode exceeded max_steps = " + std::to_string(max_steps) +
                                  "; chain may be improper or the cap too low");
        traj.states.push_back(x);
        traj.rewards.push_back(chain.r()(x));
        traj.B += chain.r()(x);
        ++traj.tau;
        const int next = detail::sample_categorical(chain.P().row(x).transpose(), rng.next_double());
        if (next < 0) break; // terminal
        x = next;
    }
    return traj;
}

/// Simulates one episode: x0 ~ zeta0, transitions per P, absorption with the
/// per-row probability deficit.
inline Trajectory sample_trajectory(const SspChain& chain, SplitRng& rng,
                                    std::int64_t max_steps = kDefaultMaxSteps) {
    int x0 = detail::sample_categorical(chain.zeta0(), rng.next_double());
    if (x0 < 0) x0 = chain.n() - 1; // zeta0 sums to 1 up to slack
    return sample_trajectory_from(chain, x0, rng, max_steps);
}

/// Deterministic batch: episode k always uses the stream (seed, k). Episodes
/// are generated on a fixed shard layout, so the result does not depend on
/// the thread count.
inline std::vector<Trajectory> sample_batch(const SspChain& chain, std::uint64_t seed, std::int64_t n_episodes,
                                            std::int64_t max_steps = kDefaultMaxSteps) {
    std::vector<Trajectory> out(static_cast<std::size_t>(n_episodes));
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const std::int64_t per = (n_episodes + hw - 1) / hw;
    std::vector<std::thread> workers;
    std::exception_ptr error;
    std::mutex error_mutex;
    for (unsigned t = 0; t < hw; ++t) {
        const std::int64_t lo = static_cast<std::int64_t>(t) * per;
        const std::int64_t hi = std::min<std::int64_t>(n_episodes, lo + per);
        if (lo >= hi) break;
        workers.emplace_back([&, lo, hi] {
            try {
                for (std::int64_t k = lo; k < hi; ++k) {
                    SplitRng rng(seed, static_cast<std::uint64_t>(k));
                    out[static_cast<std::size_t>(k)] = sample_trajectory(chain, rng, max_steps);
                }
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        });
    }
    for (auto& w : workers) w.join();
    if (error) std::rethrow_exception(error);
    return out;
}

struct MonteCarloMoments {
    double J_hat = 0.0;
    double M_hat = 0.0;
    double V_hat = 0.0;
    double se_J = 0.0;
    double se_M = 0.0;
    double se_V = 0.0;
    std::int64_t N = 0;
};

/// Sample mean of B, of B^2, and the unbiased sample variance from episodes
/// started at a fixed state, with asymptotic standard errors.
inline MonteCarloMoments monte_carlo_moments(const SspChain& chain, int start_state, std::int64_t n_episodes,
                                             std::uint64_t seed, std::int64_t max_steps = kDefaultMaxSteps) {
    if (n_episodes < 2) throw StructuralError("monte_carlo_moments needs N >= 2");
    // raw power sums of B, sharded deterministically (64 fixed shards)
    constexpr int kShards = 64;
    struct Sums {
        double s1 = 0, s2 = 0, s3 = 0, s4 = 0;
    };
    std::vector<Sums> shard(kShards);
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    std::vector<std::thread> workers;
    std::exception_ptr error;
    std::mutex error_mutex;
    std::atomic<int> next_shard{0};
    const std::int64_t per = (n_episodes + kShards - 1) / kShards;
    for (unsigned t = 0; t < hw; ++t) {
        workers.emplace_back([&] {
            try {
                for (;;) {
                    const int s = next_shard.fetch_add(1);
                    if (s >= kShards) return;
                    const std::int64_t lo = s * per;
                    const std::int64_t hi = std::min<std::int64_t>(n_episodes, lo + per);
                    Sums acc;
                    for (std::int64_t k = lo; k < hi; ++k) {
                        SplitRng rng(seed, static_cast<std::uint64_t>(k));
                        const Trajectory traj = sample_trajectory_from(chain, start_state, rng, max_steps);
                        const double b = traj.B;
                        const double b2 = b * b;
                        acc.s1 += b;
                        acc.s2 += b2;
                        acc.s3 += b2 * b;
                        acc.s4 += b2 * b2;
                    }
                    shard[static_cast<std::size_t>(s)] = acc;
                }
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        });
    }
    for (auto& w : workers) w.join();
    if (error) std::rethrow_exception(error);

    Sums tot;
    for (const auto& s : shard) {
        tot.s1 += s.s1;
        tot.s2 += s.s2;
        tot.s3 += s.s3;
        tot.s4 += s.s4;
    }
    const double n = static_cast<double>(n_episodes);
    const double m1 = tot.s1 / n;
    const double m2 = tot.s2 / n;
    const double m3 = tot.s3 / n;
    const double m4 = tot.s4 / n;
    // central moments
    const double c2 = std::max(0.0, m2 - m1 * m1);
    const double c4 = std::max(0.0, m4 - 4 * m3 * m1 + 6 * m2 * m1 * m1 - 3 * m1 * m1 * m1 * m1);

    MonteCarloMoments mc;
    mc.N = n_episodes;
    mc.J_hat = m1;
    mc.M_hat = m2;
    mc.V_hat = c2 * n / (n - 1.0);
    mc.se_J = std::sqrt(c2 / n);
    const double var_b2 = std::max(0.0, m4 - m2 * m2);
    mc.se_M = std::sqrt(var_b2 / n);
    mc.se_V = std::sqrt(std::max(0.0, c4 - c2 * c2) / n);
    return mc;
}

/// Empirical sufficient statistics over trajectories:
///   S1 = E_N[ sum_t phi1(x_t) phi2(x_t)^T ]
///   S2 = E_N[ sum_t phi1(x_t) phi2(x_{t+1})^T ]   with phi(terminal) = 0.
struct EmpiricalStats {
    std::int64_t N = 0;
    MatrixXd S1;
    MatrixXd S2;

    static EmpiricalStats merge(const EmpiricalStats& a, const EmpiricalStats& b) {
        if (a.N == 0) return b;
        if (b.N == 0) return a;
        EmpiricalStats m;
        m.N = a.N + b.N;
        const double wa = static_cast<double>(a.N) / m.N;
        const double wb = static_cast<double>(b.N) / m.N;
        m.S1 = wa * a.S1 + wb * b.S1;
        m.S2 = wa * a.S2 + wb * b.S2;
        return m;
    }
};

inline EmpiricalStats empirical_statistics(const std::vector<Trajectory>& trajectories, const MatrixXd& phi1,
                                           const MatrixXd& phi2) {
    EmpiricalStats st;
    st.N = static_cast<std::int64_t>(trajectories.size());
    st.S1 = MatrixXd::Zero(phi1.cols(), phi2.cols());
    st.S2 = MatrixXd::Zero(phi1.cols(), phi2.cols());
    for (const auto& traj : trajectories) {
        for (std::size_t t = 0; t < traj.states.size(); ++t) {
            const int x = traj.states[t];
            st.S1 += phi1.row(x).transpose() * phi2.row(x);
            if (t + 1 < traj.states.size()) {
                st.S2 += phi1.row(x).transpose() * phi2.row(traj.states[t + 1]);
            } // next state terminal: phi2 = 0, contributes nothing
        }
    }
    if (st.N > 0) {
        st.S1 /= static_cast<double>(st.N);
        st.S2 /= static_cast<double>(st.N);
    }
    return st;
}

} // namespace vartd
