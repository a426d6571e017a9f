#include "qremkit/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace qremkit {

SignResiduals sign_residuals(const Vector& residuals, double q, double zero_guard_abs) {
    SignResiduals sr;
    sr.q = q;
    const auto n = residuals.size();
    sr.c.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        if (residuals[i] > zero_guard_abs) {
            sr.c[i] = 2.0 * q;
            sr.above.push_back(idx);
        } else if (residuals[i] < -zero_guard_abs) {
            sr.c[i] = 2.0 * q - 2.0;
            sr.below.push_back(idx);
        } else {
            sr.c[i] = 2.0 * q - 1.0;
            sr.zero.push_back(idx);
        }
    }
    return sr;
}

SignResiduals sign_residuals(const QuantileFit& fit) {
    return sign_residuals(fit.residuals, fit.q, fit.zero_guard_abs);
}

SignResiduals sign_residuals(const MixedFit& fit) {
    return sign_residuals(fit.residuals, fit.q, fit.zero_guard_abs);
}

double ks_statistic(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw EmptySide("ks_statistic: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    double d = 0.0;
    std::size_t ia = 0, ib = 0;
    while (ia < a.size() && ib < b.size()) {
        const double t = std::min(a[ia], b[ib]);
        while (ia < a.size() && a[ia] <= t) ++ia;
        while (ib < b.size() && b[ib] <= t) ++ib;
        d = std::max(d, std::abs(static_cast<double>(ia) / na - static_cast<double>(ib) / nb));
    }
    return d;
}

double ks_bound(std::size_t na, std::size_t nb, double c) {
    return c * std::sqrt(static_cast<double>(na + nb) /
                         (static_cast<double>(na) * static_cast<double>(nb)));
}

namespace {

Vector sorted_quantiles(const std::vector<double>& sorted, const Vector& probs) {
    Vector out(probs.size());
    const double nm1 = static_cast<double>(sorted.size()) - 1.0;
    for (Eigen::Index j = 0; j < probs.size(); ++j) {
        const double h = nm1 * probs[j];
        const auto lo = static_cast<std::size_t>(std::floor(h));
        const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
        out[j] = sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
    }
    return out;
}

std::vector<double> gather(const Vector& x, const std::vector<std::size_t>& idx) {
    std::vector<double> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(x[static_cast<Eigen::Index>(i)]);
    return out;
}

}  // namespace

QQPairs qq_pairs(const Vector& x_col, const SignResiduals& sr) {
    if (sr.above.empty() || sr.below.empty()) {
        throw EmptySide("qq_pairs: one side of the split is empty");
    }
    std::vector<double> xa = gather(x_col, sr.above);
    std::vector<double> xb = gather(x_col, sr.below);

    QQPairs out;
    out.ks = ks_statistic(xa, xb);
    out.ks_bound_1pct = ks_bound(xa.size(), xb.size());

    const std::size_t m = std::min(xa.size(), xb.size());
    out.probs.resize(static_cast<Eigen::Index>(m));
    for (std::size_t j = 0; j < m; ++j) {
        out.probs[static_cast<Eigen::Index>(j)] =
            (static_cast<double>(j) + 0.5) / static_cast<double>(m);
    }
    std::sort(xa.begin(), xa.end());
    std::sort(xb.begin(), xb.end());
    out.above_quantiles = sorted_quantiles(xa, out.probs);
    out.below_quantiles = sorted_quantiles(xb, out.probs);
    return out;
}

FlatQQ flat_qq(const std::vector<QuantileFit>& fits, const Vector& x_col, std::size_t L) {
    if (fits.empty()) throw InvalidParameter("flat_qq: empty quantile grid");
    if (L < 2) throw InvalidParameter("flat_qq: need L >= 2");

    FlatQQ out;
    out.xi_grid.resize(static_cast<Eigen::Index>(L));
    const double lo = x_col.minCoeff();
    const double hi = x_col.maxCoeff();
    for (std::size_t j = 0; j < L; ++j) {
        out.xi_grid[static_cast<Eigen::Index>(j)] =
            lo + (hi - lo) * static_cast<double>(j) / static_cast<double>(L - 1);
    }
    out.ratios = Matrix::Constant(static_cast<Eigen::Index>(L),
                                  static_cast<Eigen::Index>(fits.size()),
                                  std::numeric_limits<double>::quiet_NaN());
    out.missing.assign(L, std::vector<bool>(fits.size(), true));

    for (std::size_t fi = 0; fi < fits.size(); ++fi) {
        out.quantile_grid.push_back(fits[fi].q);
        QQPairs pairs;
        try {
            pairs = qq_pairs(x_col, sign_residuals(fits[fi]));
        } catch (const EmptySide&) {
            continue;  // whole column stays missing
        }
        for (std::size_t j = 0; j < L; ++j) {
            const double xi = out.xi_grid[static_cast<Eigen::Index>(j)];
            std::size_t ne = 0, nt = 0;
            for (Eigen::Index k = 0; k < pairs.probs.size(); ++k) {
                ne += (pairs.above_quantiles[k] < xi);
                nt += (pairs.below_quantiles[k] < xi);
            }
            if (nt > 0) {
                out.ratios(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(fi)) =
                    static_cast<double>(ne) / static_cast<double>(nt);
                out.missing[j][fi] = false;
            }
        }
    }
    return out;
}

namespace {

/// log C(n,k) + k log p + (n-k) log(1-p)
double log_binom_pmf(std::size_t n, std::size_t k, double p) {
    const double ln = static_cast<double>(n);
    const double lk = static_cast<double>(k);
    const double lc = std::lgamma(ln + 1.0) - std::lgamma(lk + 1.0) - std::lgamma(ln - lk + 1.0);
    double acc = lc;
    if (k > 0) acc += lk * std::log(p);
    if (k < n) acc += (ln - lk) * std::log1p(-p);
    return acc;
}

double binom_two_sided_p(std::size_t n, std::size_t k, double p) {
    double lower = 0.0, upper = 0.0;
    for (std::size_t x = 0; x <= n; ++x) {
        const double pm = std::exp(log_binom_pmf(n, x, p));
        if (x <= k) lower += pm;
        if (x >= k) upper += pm;
    }
    return std::min(1.0, 2.0 * std::min(lower, upper));
}

}  // namespace

std::vector<CategoricalLevel> categorical_balance(const std::vector<std::string>& level_labels,
                                                  const SignResiduals& sr) {
    if (level_labels.size() != static_cast<std::size_t>(sr.c.size())) {
        throw DimensionMismatch("categorical_balance: label count disagrees with residuals");
    }
    std::map<std::string, std::pair<std::size_t, std::size_t>> tally;  // label -> (count, above)
    for (std::size_t i = 0; i < level_labels.size(); ++i) {
        auto& t = tally[level_labels[i]];
        ++t.first;
    }
    if (tally.size() < 2) throw SparseLevel("categorical_balance: need at least 2 levels");
    for (std::size_t i : sr.above) ++tally[level_labels[i]].second;

    const double expected = 1.0 - sr.q;
    std::vector<CategoricalLevel> out;
    for (const auto& [label, t] : tally) {
        if (t.first < 5) {
            throw SparseLevel("categorical_balance: level '" + label + "' has fewer than 5 observations");
        }
        CategoricalLevel lv;
        lv.label = label;
        lv.count = t.first;
        lv.share_above = static_cast<double>(t.second) / static_cast<double>(t.first);
        lv.expected = expected;
        lv.p_value = binom_two_sided_p(t.first, t.second, expected);
        out.push_back(std::move(lv));
    }
    return out;
}

}  // namespace qremkit
