#pragma once

#include "qremkit/qrem.hpp"

#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace qremkit {

/// Parameters of the three-component effect mixture: gamma_k in {-1,0,+1}
/// with proportions (p_L, p_0, p_R) and effect sizes v_k ~ N(mu, sigma_v2).
struct MixtureParams {
    double mu = 1.0;
    double sigma_v2 = 1.0;
    double p_L = 0.0;
    double p_0 = 1.0;
    double p_R = 0.0;
    double sigma_eps2 = 1.0;
    double beta0 = 0.0;
};

struct SelectionState {
    std::vector<std::size_t> S;
    Matrix gamma_post;  // P x 3, class order (-1, 0, +1)
    MixtureParams params;
    std::vector<double> loglik_trace;  // -2 sum rho_q(u) per outer iteration
};

struct InitOneAtATime { std::size_t K = 10; };
struct InitChunked { std::size_t m = 50; std::size_t K = 10; };
struct InitProvided { std::vector<std::size_t> set; };
using InitStrategy = std::variant<InitOneAtATime, InitChunked, InitProvided>;

/// Candidate screening: ranks columns by single-predictor (or within-chunk)
/// quantile regression |z| and keeps the top K.
std::vector<std::size_t> init_candidates(const Vector& y, const Matrix& X, Quantile q,
                                         const InitStrategy& strategy);

struct SemmsOutcome {
    std::vector<std::size_t> S;
    Matrix gamma_post;
    MixtureParams params;
    bool converged = true;
    std::size_t moves = 0;
};

/// One round of the empirical-Bayes mixture selector on the shifted response:
/// alternates coordinate posterior updates with closed-form moment updates of
/// the mixture parameters, then applies greedy single-variable add/drop moves
/// whose marginal-likelihood gain exceeds delta. Move scoring residualizes
/// the candidate column against the active set, so a move's gain equals the
/// joint-fit improvement. The returned set keeps the columns whose posterior
/// class is non-null.
SemmsOutcome semms_step(const Vector& y_tilde, const Matrix& X,
                        const std::vector<std::size_t>& S, double delta,
                        std::size_t max_moves,
                        const std::vector<std::size_t>& locked_in = {},
                        const std::vector<std::size_t>* scan_order = nullptr);

struct SelectOptions {
    double delta = 2.0;
    double epsilon = 1e-4;  // outer convergence, per observation
    InitStrategy init = InitOneAtATime{10};
    std::size_t max_outer = 50;
    std::size_t max_moves = 200;
    std::size_t randomized_restarts = 0;
    RngStream rng{0, 0};
    std::vector<std::size_t> locked_in;
    QremOptions qrem;
};

struct SelectResult {
    QuantileFit fit;  // QR fit on [1, X_S]
    SelectionState state;
    std::vector<std::vector<std::size_t>> terminal_sets;  // distinct sets across restarts
};

/// Variable selection for quantile regression: alternates a QR fit on the
/// active set with a mixture-selector update of the set, monitoring
/// ell = -2 sum rho_q(u) until it stabilizes.
SelectResult fit_select(const Vector& y, const Matrix& X, Quantile q,
                        const SelectOptions& opts = {});

struct GraphEdge {
    std::string from;
    std::string to;
    double q = 0.5;
    int sign = 0;
    double strength = 0.0;  // fitted coefficient on the original scale
};

struct QuantileGraph {
    std::vector<std::string> nodes;
    std::vector<GraphEdge> edges;
    std::vector<std::string> failures;  // per-node failure notes
};

/// Neighborhood selection: runs fit_select once per column per quantile with
/// that column as the response and the rest as putative predictors.
QuantileGraph neighborhood_graph(const Matrix& data, const std::vector<std::string>& labels,
                                 const std::vector<double>& q_grid,
                                 const SelectOptions& opts = {}, int jobs = 1);

void write_edges_csv(const QuantileGraph& graph, const std::string& path);
void write_graph_dot(const QuantileGraph& graph, const std::string& path);

}  // namespace qremkit
