#pragma once

#include <utility>

#include "vartd/features.hpp"
#include "vartd/mdp.hpp"
#include "vartd/rng.hpp"

namespace vartd::testing {

/// Random proper chain: every row keeps a terminal-probability margin, so
/// properness holds by construction.
inline SspChain random_proper_chain(int n, SplitRng& rng, double max_row_sum = 0.95) {
    MatrixXd p(n, n);
    for (int x = 0; x < n; ++x) {
        double sum = 0.0;
        for (int y = 0; y < n; ++y) {
            p(x, y) = rng.next_double();
            sum += p(x, y);
        }
        const double target = 0.3 + (max_row_sum - 0.3) * rng.next_double();
        p.row(x) *= target / sum;
    }
    VectorXd r(n), z(n);
    double zsum = 0.0;
    for (int x = 0; x < n; ++x) {
        r(x) = 4.0 * rng.next_double() - 2.0;
        z(x) = 0.05 + rng.next_double();
        zsum += z(x);
    }
    z /= zsum;
    return SspChain(std::move(p), std::move(r), std::move(z));
}

/// Random full-rank feature matrix (entries uniform in [-1,1], plus a small
/// identity bump on the leading block to keep the rank check honest).
inline MatrixXd random_features(int n, int l, SplitRng& rng) {
    MatrixXd phi(n, l);
    for (int x = 0; x < n; ++x)
        for (int c = 0; c < l; ++c) phi(x, c) = 2.0 * rng.next_double() - 1.0;
    for (int c = 0; c < std::min(n, l); ++c) phi(c, c) += 2.0;
    return phi;
}

} // namespace vartd::testing
