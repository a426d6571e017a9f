#include "qremkit/qrem.hpp"

#include "qremkit/numkit.hpp"

#include <cmath>

namespace qremkit {

double check_loss(double u, Quantile q) {
    return u * (q.value() - (u < 0.0 ? 1.0 : 0.0));
}

double check_loss_sum(const Vector& u, Quantile q) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < u.size(); ++i) acc += check_loss(u[i], q);
    return acc;
}

double ald_logdensity(double u, Quantile q, double alpha) {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) {
        throw InvalidParameter("ald_logdensity: alpha must be positive");
    }
    const double qv = q.value();
    return std::log(qv * (1.0 - qv)) - check_loss(u / alpha, q) - std::log(alpha);
}

double response_scale(const Vector& y) {
    const auto n = y.size();
    if (n < 2) return std::max(1.0, y.cwiseAbs().maxCoeff());
    const double mean = y.mean();
    const double sd = std::sqrt((y.array() - mean).square().sum() / static_cast<double>(n - 1));
    if (sd > 0.0 && std::isfinite(sd)) return sd;
    return std::max(1.0, y.cwiseAbs().maxCoeff());
}

QuantileFit fit_qrem(const Matrix& X, const Vector& y, Quantile q, const QremOptions& opts) {
    const auto n = X.rows();
    const auto P = X.cols();
    if (y.size() != n) throw DimensionMismatch("fit_qrem: X and y row counts disagree");
    if (n <= P) throw DimensionMismatch("fit_qrem: need n > P");

    const double qv = q.value();
    const double guard = opts.zero_guard * response_scale(y);
    const double eps = opts.epsilon * static_cast<double>(n);

    QuantileFit fit;
    fit.q = qv;
    fit.zero_guard_abs = guard;

    Vector beta = solve_ols_ridge_fallback(X, y);
    Vector w(n);

    for (std::size_t it = 1; it <= opts.max_iter; ++it) {
        const Vector u = y - X * beta;
        for (Eigen::Index i = 0; i < n; ++i) w[i] = std::max(std::abs(u[i]), guard);

        const Vector offset = (1.0 - 2.0 * qv) * w;
        const Vector beta_new = solve_wls(X, y, w, offset);

        // Monitor: conditional log-likelihood of y|w differs between the two
        // coefficient vectors only through the weighted quadratic term.
        const Vector r_old = y - X * beta - offset;
        const Vector r_new = y - X * beta_new - offset;
        const double delta =
            0.5 * std::abs((r_old.array().square() / w.array()).sum() -
                           (r_new.array().square() / w.array()).sum());

        beta = beta_new;
        fit.iterations = it;
        fit.objective_trace.push_back(check_loss_sum(y - X * beta, q));
        if (delta < eps) {
            fit.converged = true;
            break;
        }
    }

    fit.beta = beta;
    fit.residuals = y - X * beta;
    for (Eigen::Index i = 0; i < n; ++i) w[i] = std::max(std::abs(fit.residuals[i]), guard);
    fit.weights = w;
    return fit;
}

GoodnessOfFit goodness_of_fit(const QuantileFit& fit) {
    const auto n = fit.residuals.size();
    GoodnessOfFit out;
    out.mean_check = check_loss_sum(fit.residuals, Quantile(fit.q)) / static_cast<double>(n);
    out.G = 2.0 * static_cast<double>(n) * out.mean_check;
    out.aic = 2.0 * out.G + 2.0 * static_cast<double>(fit.beta.size());
    return out;
}

AsymptoticCov asymptotic_cov(const QuantileFit& fit, const Matrix& X,
                             std::optional<double> bandwidth) {
    if (X.rows() != fit.residuals.size()) {
        throw DimensionMismatch("asymptotic_cov: X rows disagree with fit residuals");
    }
    const double f0 = kde_at_zero(fit.residuals, bandwidth);
    if (f0 <= 1e-12) throw DegenerateDensity("asymptotic_cov: estimated density at zero vanishes");

    const Matrix A = X.transpose() * X;
    Eigen::LDLT<Matrix> ldlt(A);
    const Vector d = ldlt.vectorD().cwiseAbs();
    if (!(d.maxCoeff() > 0.0) || d.minCoeff() < kWlsRankTol * d.maxCoeff()) {
        throw RankDeficient("asymptotic_cov: X^T X is singular beyond tolerance");
    }
    const Matrix inv = ldlt.solve(Matrix::Identity(X.cols(), X.cols()));

    AsymptoticCov out;
    out.f0 = f0;
    out.cov = (fit.q * (1.0 - fit.q) / (f0 * f0)) * inv;
    out.cov = 0.5 * (out.cov + out.cov.transpose());
    out.se = out.cov.diagonal().cwiseMax(0.0).cwiseSqrt();
    return out;
}

}  // namespace qremkit
