#pragma once

#include "qremkit/mixed.hpp"
#include "qremkit/qrem.hpp"

#include <vector>

namespace qremkit {

/// Binary sign residuals c_i = sign(u_i) - (1-2q); residuals within the fit's
/// zero guard are recorded separately instead of being forced into A or B.
struct SignResiduals {
    double q = 0.5;
    Vector c;                        // 2q (above), 2q-2 (below), 2q-1 (zero)
    std::vector<std::size_t> above;  // A
    std::vector<std::size_t> below;  // B
    std::vector<std::size_t> zero;   // interpolated points
};

SignResiduals sign_residuals(const QuantileFit& fit);
SignResiduals sign_residuals(const MixedFit& fit);
SignResiduals sign_residuals(const Vector& residuals, double q, double zero_guard_abs);

/// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|.
double ks_statistic(std::vector<double> a, std::vector<double> b);

/// c * sqrt((na+nb)/(na*nb)); c = 1.63 is the 1% critical constant.
double ks_bound(std::size_t na, std::size_t nb, double c = 1.63);

struct QQPairs {
    Vector probs;
    Vector above_quantiles;  // empirical side (A)
    Vector below_quantiles;  // theoretical side (B)
    double ks = 0.0;
    double ks_bound_1pct = 0.0;
};

/// Matched empirical quantiles of a predictor over the A and B sets on
/// min(|A|,|B|) probability points.
QQPairs qq_pairs(const Vector& x_col, const SignResiduals& sr);

struct FlatQQ {
    std::vector<double> quantile_grid;
    Vector xi_grid;
    Matrix ratios;                       // L x |grid|; NaN marks missing cells
    std::vector<std::vector<bool>> missing;  // [xi][q]
};

/// Flat Q-Q ratio matrix r_q(xi) = n_e(xi) / n_t(xi) over L equally spaced
/// cut points; empty-denominator cells are flagged missing.
FlatQQ flat_qq(const std::vector<QuantileFit>& fits, const Vector& x_col, std::size_t L = 20);

struct CategoricalLevel {
    std::string label;
    std::size_t count = 0;
    double share_above = 0.0;
    double expected = 0.0;  // 1 - q
    double p_value = 1.0;
};

/// Per-level share of A-membership with an exact binomial two-sided p-value
/// (doubling convention).
std::vector<CategoricalLevel> categorical_balance(const std::vector<std::string>& level_labels,
                                                  const SignResiduals& sr);

}  // namespace qremkit
