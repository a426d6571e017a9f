#include "qremkit/numkit.hpp"

#include <algorithm>
#include <cmath>

namespace qremkit {

namespace {

Vector solve_normal_system(const Matrix& A, const Vector& b) {
    Eigen::LDLT<Matrix> ldlt(A);
    const Vector d = ldlt.vectorD().cwiseAbs();
    const double dmax = d.maxCoeff();
    if (!(dmax > 0.0) || d.minCoeff() < kWlsRankTol * dmax || ldlt.info() != Eigen::Success) {
        throw RankDeficient("weighted cross-product is singular beyond tolerance");
    }
    return ldlt.solve(b);
}

}  // namespace

Vector solve_wls(const Matrix& X, const Vector& y, const Vector& w, const Vector& offset) {
    const auto n = X.rows();
    if (y.size() != n || w.size() != n || offset.size() != n) {
        throw DimensionMismatch("solve_wls: row counts disagree");
    }
    if (X.cols() < 1 || n < X.cols()) {
        throw DimensionMismatch("solve_wls: need n >= P >= 1");
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!(w[i] > 0.0) || !std::isfinite(w[i])) {
            throw InvalidParameter("solve_wls: weights must be positive and finite");
        }
    }
    const Vector iw = w.cwiseInverse();
    const Matrix Xw = iw.asDiagonal() * X;
    const Matrix A = X.transpose() * Xw;
    const Vector b = Xw.transpose() * (y - offset);
    return solve_normal_system(A, b);
}

Vector solve_ols(const Matrix& X, const Vector& y) {
    return solve_wls(X, y, Vector::Ones(X.rows()), Vector::Zero(X.rows()));
}

Vector solve_ols_ridge_fallback(const Matrix& X, const Vector& y, double ridge) {
    try {
        return solve_ols(X, y);
    } catch (const RankDeficient&) {
        Matrix A = X.transpose() * X;
        A.diagonal().array() += ridge;
        Eigen::LDLT<Matrix> ldlt(A);
        return ldlt.solve(X.transpose() * y);
    }
}

double silverman_bandwidth(const Vector& u) {
    const auto n = u.size();
    if (n < 2) throw DegenerateSample("bandwidth: need at least 2 points");
    const double mean = u.mean();
    const double sd = std::sqrt((u.array() - mean).square().sum() / static_cast<double>(n - 1));
    std::vector<double> v(u.data(), u.data() + n);
    const double iqr = quantile_type7(v, 0.75) - quantile_type7(v, 0.25);
    double spread = sd;
    if (iqr > 0.0) spread = std::min(sd, iqr / 1.34);
    if (!(spread > 0.0)) throw DegenerateSample("bandwidth: sample has zero spread");
    return 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
}

double kde_at_zero(const Vector& u, std::optional<double> bandwidth) {
    const auto n = u.size();
    if (n < 2) throw DegenerateSample("kde_at_zero: need at least 2 points");
    double h;
    if (bandwidth) {
        h = *bandwidth;
        if (!(h > 0.0) || !std::isfinite(h)) throw InvalidParameter("kde_at_zero: bandwidth must be positive");
    } else {
        h = silverman_bandwidth(u);
    }
    const double inv_norm = 1.0 / (static_cast<double>(n) * h * std::sqrt(2.0 * M_PI));
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double z = u[i] / h;
        acc += std::exp(-0.5 * z * z);
    }
    return acc * inv_norm;
}

Vector sample(const Dist& dist, std::size_t n, RngStream& rng) {
    Vector out(static_cast<Eigen::Index>(n));
    std::visit([&](const auto& d) {
        using T = std::decay_t<decltype(d)>;
        for (std::size_t i = 0; i < n; ++i) {
            if constexpr (std::is_same_v<T, UniformDist>) {
                out[static_cast<Eigen::Index>(i)] = rng.uniform(d.a, d.b);
            } else if constexpr (std::is_same_v<T, NormalDist>) {
                out[static_cast<Eigen::Index>(i)] = rng.normal(d.mean, d.sd);
            } else if constexpr (std::is_same_v<T, LognormalDist>) {
                out[static_cast<Eigen::Index>(i)] = rng.lognormal(d.log_mean, d.log_sd);
            } else {
                out[static_cast<Eigen::Index>(i)] = rng.exponential(d.rate);
            }
        }
    }, dist);
    return out;
}

}  // namespace qremkit
