#pragma once

#include "qremkit/mixed.hpp"
#include "qremkit/numkit.hpp"
#include "qremkit/qrem.hpp"

#include <optional>
#include <string>
#include <vector>

namespace qremkit {

// -------------------------------------------------------------------------
// Scenario description
// -------------------------------------------------------------------------

struct MeanTerm {
    enum Kind { Intercept, Linear, Square, Interaction };
    Kind kind = Intercept;
    double coef = 0.0;
    int j1 = -1;  // 0-based predictor index
    int j2 = -1;  // second index for interactions
};

/// sd(x) = | c0 + sum_i coef_i * x_{j_i}^{power_i} |, powers 1 or 3.
struct ScaleTerm {
    double coef = 0.0;
    int j = -1;
    int power = 1;
};

struct ScaleExpr {
    double c0 = 1.0;
    std::vector<ScaleTerm> terms;

    bool constant() const { return terms.empty(); }
    double eval(const Vector& xrow) const;
};

struct RandomEffectSpec {
    double sd = 0.5;
    int groups = 100;
    int times = 4;
    // predictor law x_it ~ N(time_scale * t, time_sd^2)
    double time_scale = 0.25;
    double time_sd = 0.1;
};

struct Scenario {
    std::string id;
    std::size_t n = 1000;
    std::size_t n_true = 1;        // generated predictor columns
    std::size_t P = 0;             // total columns after noise augmentation (0 = n_true)
    std::vector<MeanTerm> mean_terms;
    enum ErrorLaw { Normal, Lognormal } error_law = Normal;
    ScaleExpr scale;
    std::vector<UniformDist> predictor_laws;  // per true column
    double ar1_rho = 0.0;          // >0: true block is an AR1 copula over uniforms
    double noise_sd = 0.1;         // augmentation columns ~ N(0, noise_sd^2)
    std::optional<RandomEffectSpec> random_effect;

    void validate() const;

    /// Built-in bank a3, rows 1..25: location/scale families over uniform
    /// predictors, plus one random-intercept panel.
    static Scenario table_a3(int row);
    /// Built-in bank a4, rows 1..9: large-P designs with noise augmentation.
    static Scenario table_a4(int row);
    /// Declarative key = value text format.
    static Scenario parse(const std::string& text);
    static Scenario load(const std::string& path);

    /// Column indices that carry signal at quantile q.
    std::vector<std::size_t> support(double q) const;

    /// Coefficients of the conditional-quantile hyperplane on the fitted
    /// design, when the scenario's quantile function is exactly linear in it.
    std::optional<Vector> true_design_coefs(double q) const;
};

struct GeneratedData {
    Matrix X;                      // raw predictor columns
    Vector y;
    std::vector<int> groups;       // empty unless random_effect present
    int G = 0;
};

GeneratedData generate(const Scenario& s, RngStream rng);

/// Fitting design implied by the scenario's mean terms: intercept first,
/// then one column per non-intercept term.
Matrix scenario_design(const Scenario& s, const Matrix& X);

// -------------------------------------------------------------------------
// Replication runner
// -------------------------------------------------------------------------

enum class FitMethod { Qrem, Eqrem, Select };

struct RunOptions {
    FitMethod method = FitMethod::Qrem;
    std::size_t boot_reps = 200;        // eqrem coverage intervals
    double ci_level = 0.95;
    QremOptions qrem;
    double select_delta = 2.0;
    std::size_t select_K = 10;
    int jobs = 1;
};

struct QuantileMetrics {
    double q = 0.5;
    Vector mean_estimate;
    std::optional<Vector> bias;
    Vector empirical_sd;
    Vector mean_se;
    std::optional<Vector> coverage;
    std::vector<std::size_t> tp_hist;   // select: histogram over true-positive counts
    std::vector<std::size_t> fp_hist;
    std::size_t failures = 0;
    double runtime_sec = 0.0;
};

struct ReplicationReport {
    std::string scenario_id;
    std::size_t reps = 0;
    std::vector<QuantileMetrics> per_q;
};

ReplicationReport run_replications(const Scenario& s, const std::vector<double>& q_grid,
                                   std::size_t reps, const RunOptions& opts, RngStream rng);

void write_report_csv(const ReplicationReport& report, const std::string& path);

}  // namespace qremkit
