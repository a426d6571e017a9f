#pragma once

#include "qremkit/common.hpp"

#include <optional>
#include <variant>

namespace qremkit {

/// Relative singularity tolerance for weighted normal systems.
inline constexpr double kWlsRankTol = 1e-10;

/// argmin_beta sum_i w_i^{-1} (y_i - offset_i - x_i beta)^2.
/// Weights are variance-like: larger w_i means less influence.
/// Solved through an LDLT factorization of the weighted cross-product;
/// throws RankDeficient when the factor is singular beyond kWlsRankTol.
Vector solve_wls(const Matrix& X, const Vector& y, const Vector& w, const Vector& offset);

/// Unweighted, zero-offset least squares.
Vector solve_ols(const Matrix& X, const Vector& y);

/// OLS with a small ridge fallback when X is rank-deficient.
Vector solve_ols_ridge_fallback(const Matrix& X, const Vector& y, double ridge = 1e-8);

/// Silverman's rule: 0.9 * min(sd, IQR/1.34) * n^(-1/5).
double silverman_bandwidth(const Vector& u);

/// Gaussian-kernel density estimate of the sample density at zero.
/// bandwidth = nullopt selects Silverman's rule.
double kde_at_zero(const Vector& u, std::optional<double> bandwidth = std::nullopt);

// -------------------------------------------------------------------------
// Distributions for simulation sampling
// -------------------------------------------------------------------------

struct UniformDist { double a, b; };
struct NormalDist { double mean, sd; };
struct LognormalDist { double log_mean, log_sd; };
struct ExponentialDist { double rate; };

using Dist = std::variant<UniformDist, NormalDist, LognormalDist, ExponentialDist>;

/// n iid draws; reproducible per RngStream.
Vector sample(const Dist& dist, std::size_t n, RngStream& rng);

}  // namespace qremkit
