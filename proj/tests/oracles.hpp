#pragma once

// Test-only oracles, independent of the library's fitting path.

#include "qremkit/common.hpp"
#include "qremkit/qrem.hpp"

#include <algorithm>
#include <vector>

namespace qremkit::testing {

/// Brute-force check-loss minimum over all P-point interpolating fits.
/// A quantile regression minimizer interpolates P observations, so the
/// smallest objective over all interpolating candidates is the global one.
inline double interpolating_oracle_min(const Matrix& X, const Vector& y, double q) {
    const auto n = X.rows();
    const auto P = X.cols();
    double best = std::numeric_limits<double>::infinity();

    std::vector<Eigen::Index> idx(static_cast<std::size_t>(P));
    for (Eigen::Index j = 0; j < P; ++j) idx[static_cast<std::size_t>(j)] = j;

    // iterate subsets of size P out of n via the standard odometer
    while (true) {
        Matrix Xs(P, P);
        Vector ys(P);
        for (Eigen::Index j = 0; j < P; ++j) {
            Xs.row(j) = X.row(idx[static_cast<std::size_t>(j)]);
            ys[j] = y[idx[static_cast<std::size_t>(j)]];
        }
        const Eigen::FullPivLU<Matrix> lu(Xs);
        if (lu.isInvertible()) {
            const Vector beta = lu.solve(ys);
            const double obj = check_loss_sum(y - X * beta, Quantile(q));
            best = std::min(best, obj);
        }
        // next combination
        Eigen::Index pos = P - 1;
        while (pos >= 0 && idx[static_cast<std::size_t>(pos)] == n - P + pos) --pos;
        if (pos < 0) break;
        ++idx[static_cast<std::size_t>(pos)];
        for (Eigen::Index j = pos + 1; j < P; ++j) {
            idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
        }
    }
    return best;
}

/// Trapezoid quadrature of f over [lo, hi].
template <typename F>
double trapezoid(F f, double lo, double hi, int steps) {
    const double h = (hi - lo) / steps;
    double acc = 0.5 * (f(lo) + f(hi));
    for (int i = 1; i < steps; ++i) acc += f(lo + i * h);
    return acc * h;
}

}  // namespace qremkit::testing
