#pragma once

#include "qremkit/common.hpp"

#include <optional>
#include <vector>

namespace qremkit {

/// Quantile level, open interval (0,1).
class Quantile {
public:
    explicit Quantile(double q) : q_(q) {
        if (!(q > 0.0 && q < 1.0)) throw InvalidParameter("quantile level must lie in (0,1)");
    }
    double value() const { return q_; }

private:
    double q_;
};

/// rho_q(u) = u * (q - 1[u<0])
double check_loss(double u, Quantile q);

/// sum_i rho_q(u_i)
double check_loss_sum(const Vector& u, Quantile q);

/// log of the asymmetric Laplace density q(1-q) exp{-rho_q(u/alpha)} / alpha.
double ald_logdensity(double u, Quantile q, double alpha);

/// sd(y), falling back to max(1, max|y|) on degenerate samples; reference
/// scale for the zero-residual guard.
double response_scale(const Vector& y);

struct QremOptions {
    /// Convergence threshold for the likelihood monitor, in units per
    /// observation (compared against epsilon * n).
    double epsilon = 1e-8;
    std::size_t max_iter = 1000;
    /// Residual floor for the E-step inversion, relative to scale(y);
    /// absolute floor = zero_guard * scale(y) with scale(y) = sd(y).
    double zero_guard = 1e-6;
};

struct QuantileFit {
    double q = 0.5;
    Vector beta;
    Vector weights;     // final hat-w (floored absolute residuals)
    Vector residuals;   // y - X beta
    std::size_t iterations = 0;
    std::vector<double> objective_trace;  // check loss after each M-step
    bool converged = false;
    double zero_guard_abs = 0.0;          // the absolute floor used
};

/// Fixed-effects quantile regression EM: E-step imputes w_i = |u_i| (floored),
/// M-step refits by weighted least squares on the shifted response.
QuantileFit fit_qrem(const Matrix& X, const Vector& y, Quantile q, const QremOptions& opts = {});

struct GoodnessOfFit {
    double G = 0.0;
    double aic = 0.0;
    double mean_check = 0.0;
};

/// G = 2n * mean check loss; AIC = 2G + 2P.
GoodnessOfFit goodness_of_fit(const QuantileFit& fit);

struct AsymptoticCov {
    Matrix cov;
    double f0 = 0.0;
    Vector se;
};

/// a.var(beta_q) = q(1-q) / f(0)^2 * (X^T X)^{-1}, with f(0) estimated by
/// Gaussian KDE on the fit residuals.
AsymptoticCov asymptotic_cov(const QuantileFit& fit, const Matrix& X,
                             std::optional<double> bandwidth = std::nullopt);

}  // namespace qremkit
