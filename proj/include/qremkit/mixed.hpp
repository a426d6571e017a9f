#pragma once

#include "qremkit/qrem.hpp"

#include <vector>

namespace qremkit {

/// Random-intercept design: one grouping factor, Z implicit in `groups`.
struct MixedSpec {
    Matrix X;
    std::vector<int> groups;  // 0-based group id per row
    int G = 0;

    static MixedSpec from_groups(Matrix X, std::vector<int> groups);
    void validate() const;
};

struct MixedFit {
    double q = 0.5;
    Vector beta;            // BLUE
    Vector v;               // BLUP, length G
    double K_var = 0.0;     // random-intercept variance sigma_v^2
    double sigma_e2 = 0.0;  // residual scale multiplier of the working weights
    Vector weights;
    Vector residuals;       // y - X beta - Z v
    std::size_t iterations = 0;
    std::vector<double> monitor_trace;  // conditional log-likelihood per iteration
    // Per-iteration gain of the joint (beta, v) objective
    // l(y|v,w,beta) - v^T v / (2K) under that iteration's (w, K), new minus
    // previous coefficients. The B-step maximizes it exactly, so entries
    // stay nonnegative up to solver tolerance.
    std::vector<double> bstep_gain_trace;
    bool converged = false;
    bool variance_collapsed = false;    // sigma_v^2 pinned at its lower bound
    double zero_guard_abs = 0.0;
};

/// Mixed-effects quantile regression EM (random intercept). Per iteration:
/// F-step imputes w_i = |u_i| (floored); B-steps run REML for the variance
/// ratio on the shifted response, then BLUE and BLUP under the fitted
/// covariance. REML profiles a free residual multiplier on the working
/// weights, so only the ratio gamma = sigma_v^2 / sigma_e^2 is searched
/// (golden section in log gamma).
MixedFit fit_eqrem(const MixedSpec& spec, const Vector& y, Quantile q,
                   const QremOptions& opts = {});

struct BootstrapCI {
    double level = 0.95;
    std::size_t reps = 0;        // requested
    std::size_t successful = 0;  // usable replicates
    Vector lower;
    Vector upper;
    Matrix draws;                // successful x P
};

/// Cluster bootstrap: resamples whole groups with replacement, refits EQREM
/// per replicate, returns percentile intervals. Failed replicates are
/// dropped and counted; throws TooFewSuccessfulReps below 80% usable.
BootstrapCI bootstrap_ci(const MixedSpec& spec, const Vector& y, Quantile q,
                         std::size_t reps, double level, RngStream rng,
                         const QremOptions& opts = {}, int jobs = 1);

}  // namespace qremkit
