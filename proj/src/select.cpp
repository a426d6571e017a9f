#include "qremkit/select.hpp"

#include "qremkit/numkit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

namespace qremkit {

namespace {

constexpr double kLogFloor = 1e-300;

/// Empirical-Bayes mixture engine on column-standardized data.
class SemmsEngine {
public:
    SemmsEngine(const Vector& y, const Matrix& X, const std::vector<std::size_t>& S,
                const std::vector<std::size_t>& locked,
                const std::vector<std::size_t>* scan_order)
        : n_(X.rows()), P_(X.cols()) {
        col_mean_.resize(P_);
        col_sd_.resize(P_);
        Xs_.resize(n_, P_);
        for (Eigen::Index j = 0; j < P_; ++j) {
            const double m = X.col(j).mean();
            double sd = std::sqrt((X.col(j).array() - m).square().sum() /
                                  std::max<double>(1.0, static_cast<double>(n_ - 1)));
            if (!(sd > 1e-12)) sd = 1.0;
            col_mean_[j] = m;
            col_sd_[j] = sd;
            Xs_.col(j) = (X.col(j).array() - m) / sd;
        }
        y_mean_ = y.mean();
        yc_ = y.array() - y_mean_;
        g_.resize(P_);
        for (Eigen::Index j = 0; j < P_; ++j) g_[j] = Xs_.col(j).squaredNorm();

        active_.assign(static_cast<std::size_t>(P_), false);
        locked_.assign(static_cast<std::size_t>(P_), false);
        for (std::size_t k : locked) {
            locked_[k] = true;
            active_[k] = true;
        }
        for (std::size_t k : S) active_[k] = true;

        if (scan_order) {
            order_ = *scan_order;
        } else {
            order_.resize(static_cast<std::size_t>(P_));
            for (std::size_t j = 0; j < order_.size(); ++j) order_[j] = j;
        }

        b_ = Vector::Zero(P_);
        init_coefficients();
        init_params();
    }

    SemmsOutcome run(double delta, std::size_t max_moves);

    MixtureParams params() const {
        MixtureParams p;
        p.mu = mu_;
        p.sigma_v2 = sig_v2_;
        p.p_0 = p0_;
        p.p_L = p.p_R = 0.5 * (1.0 - p0_);
        p.sigma_eps2 = sig_e2_;
        p.beta0 = y_mean_ - fitted_mean_shift();
        return p;
    }

private:
    struct ColScore {
        double L_neg = 0.0, L_zero = 0.0, L_pos = 0.0;
        double m_neg = 0.0, m_pos = 0.0;
        double var = 0.0;
    };

    void init_coefficients() {
        std::vector<std::size_t> idx = active_indices();
        if (idx.empty()) {
            r_ = yc_;
            return;
        }
        Matrix A(n_, static_cast<Eigen::Index>(idx.size()));
        for (std::size_t j = 0; j < idx.size(); ++j) {
            A.col(static_cast<Eigen::Index>(j)) = Xs_.col(static_cast<Eigen::Index>(idx[j]));
        }
        Matrix AtA = A.transpose() * A;
        AtA.diagonal().array() += 1e-8;
        const Vector bi = AtA.ldlt().solve(A.transpose() * yc_);
        for (std::size_t j = 0; j < idx.size(); ++j) {
            b_[static_cast<Eigen::Index>(idx[j])] = bi[static_cast<Eigen::Index>(j)];
        }
        r_ = yc_ - Xs_ * b_;
    }

    void init_params() {
        sig_e2_ = std::max(r_.squaredNorm() / static_cast<double>(n_), 1e-12);
        double acc = 0.0, acc2 = 0.0;
        std::size_t cnt = 0;
        for (Eigen::Index j = 0; j < P_; ++j) {
            if (active_[static_cast<std::size_t>(j)]) {
                acc += std::abs(b_[j]);
                acc2 += b_[j] * b_[j];
                ++cnt;
            }
        }
        mu_ = cnt ? acc / static_cast<double>(cnt) : 1.0;
        sig_v2_ = cnt ? std::max(acc2 / static_cast<double>(cnt) - mu_ * mu_, 0.0) : 1.0;
        const double p1 = std::clamp((static_cast<double>(cnt) + 0.5) / static_cast<double>(P_),
                                     0.5 / static_cast<double>(P_), 0.45);
        p0_ = 1.0 - p1;
        apply_guards();
    }

    /// Keeps the non-null class identifiable: its mean stays above the
    /// resolvable effect size and its spread above (mu/2)^2.
    void apply_guards() {
        const double gbar = median_g();
        const double mu_min = 2.5 * std::sqrt(sig_e2_ / std::max(gbar, 1.0));
        if (std::abs(mu_) < mu_min) mu_ = (mu_ >= 0.0 ? mu_min : -mu_min);
        sig_v2_ = std::max(sig_v2_, 0.25 * mu_ * mu_);
    }

    double median_g() const {
        std::vector<double> v(g_.data(), g_.data() + P_);
        return quantile_type7(std::move(v), 0.5);
    }

    std::vector<std::size_t> active_indices() const {
        std::vector<std::size_t> out;
        for (std::size_t j = 0; j < active_.size(); ++j) {
            if (active_[j]) out.push_back(j);
        }
        return out;
    }

    double fitted_mean_shift() const {
        double acc = 0.0;
        for (Eigen::Index j = 0; j < P_; ++j) {
            if (b_[j] != 0.0) acc += b_[j] * col_mean_[j] / col_sd_[j];
        }
        return acc;
    }

    /// Class scores for a projected column with stats (z, g, rss).
    ColScore score(double z, double g, double rss) const {
        ColScore cs;
        const double s2 = sig_e2_, t2 = sig_v2_;
        const double nd = static_cast<double>(n_);
        const double prec = 1.0 / t2 + g / s2;
        cs.var = 1.0 / prec;
        cs.L_zero = -0.5 * (nd * std::log(s2) + rss / s2);
        const double shrink = t2 / (s2 * (s2 + t2 * g));
        for (int side = 0; side < 2; ++side) {
            const double c = side == 0 ? -1.0 : 1.0;
            const double quad = (rss - 2.0 * c * mu_ * z + mu_ * mu_ * g) / s2 -
                                shrink * (z - c * mu_ * g) * (z - c * mu_ * g);
            const double L = -0.5 * ((nd - 1.0) * std::log(s2) + std::log(s2 + t2 * g) + quad);
            const double m = (mu_ / t2 + c * z / s2) / prec;
            if (side == 0) { cs.L_neg = L; cs.m_neg = m; }
            else { cs.L_pos = L; cs.m_pos = m; }
        }
        return cs;
    }

    ColScore coordinate_score(Eigen::Index k) const {
        const Vector rk = r_ + Xs_.col(k) * b_[k];
        return score(Xs_.col(k).dot(rk), g_[k], rk.squaredNorm());
    }

    Eigen::Vector3d posterior_from(const ColScore& cs) const {
        const double lp1 = std::log(std::max(0.5 * (1.0 - p0_), kLogFloor));
        const double lp0 = std::log(std::max(p0_, kLogFloor));
        Eigen::Vector3d logs(lp1 + cs.L_neg, lp0 + cs.L_zero, lp1 + cs.L_pos);
        const double mx = logs.maxCoeff();
        Eigen::Vector3d p = (logs.array() - mx).exp();
        return p / p.sum();
    }

    void em_sweep() {
        double acc_mass = 0.0, acc_mean = 0.0, acc_sq = 0.0, var_extra = 0.0;
        for (std::size_t k : order_) {
            const auto j = static_cast<Eigen::Index>(k);
            const ColScore cs = coordinate_score(j);
            const Eigen::Vector3d p = posterior_from(cs);
            acc_mass += p[0] + p[2];
            acc_mean += p[0] * cs.m_neg + p[2] * cs.m_pos;
            const double ev2 = p[0] * (cs.m_neg * cs.m_neg + cs.var) +
                               p[2] * (cs.m_pos * cs.m_pos + cs.var);
            acc_sq += ev2;
            if (active_[k]) {
                const double bnew = p[2] * cs.m_pos - p[0] * cs.m_neg;
                r_ -= Xs_.col(j) * (bnew - b_[j]);
                b_[j] = bnew;
                var_extra += std::max(ev2 - b_[j] * b_[j], 0.0) * g_[j];
            }
        }
        if (acc_mass > 1e-8) {
            mu_ = acc_mean / acc_mass;
            sig_v2_ = std::max(acc_sq / acc_mass - mu_ * mu_, 1e-8);
        }
        p0_ = std::clamp(1.0 - acc_mass / static_cast<double>(P_), 1e-4,
                         1.0 - 0.5 / static_cast<double>(P_));
        sig_e2_ = std::max((r_.squaredNorm() + var_extra) / static_cast<double>(n_), 1e-12);
        apply_guards();
    }

    /// Thin orthonormal basis of the standardized columns in idx.
    Matrix basis(const std::vector<std::size_t>& idx) const {
        Matrix A(n_, static_cast<Eigen::Index>(idx.size()));
        for (std::size_t j = 0; j < idx.size(); ++j) {
            A.col(static_cast<Eigen::Index>(j)) = Xs_.col(static_cast<Eigen::Index>(idx[j]));
        }
        Eigen::HouseholderQR<Matrix> qr(A);
        Matrix Q = qr.householderQ() * Matrix::Identity(n_, static_cast<Eigen::Index>(idx.size()));
        return Q;
    }

    struct Move {
        Eigen::Index k = -1;
        double gain = -std::numeric_limits<double>::infinity();
        int cls = 0;  // -1/+1 add, 0 drop
    };

    Move best_move() const {
        const double lp1 = std::log(std::max(0.5 * (1.0 - p0_), kLogFloor));
        const double lp0 = std::log(std::max(p0_, kLogFloor));
        Move best;
        const std::vector<std::size_t> act = active_indices();
        const Matrix Q = act.empty() ? Matrix(n_, 0) : basis(act);
        const double rss = r_.squaredNorm();
        for (std::size_t k : order_) {
            if (active_[k]) continue;
            const auto j = static_cast<Eigen::Index>(k);
            Vector x = Xs_.col(j);
            if (Q.cols() > 0) x -= Q * (Q.transpose() * x);
            const double gt = x.squaredNorm();
            if (gt < 1e-10) continue;
            const ColScore cs = score(x.dot(r_), gt, rss);
            const double base = lp0 + cs.L_zero;
            const double gn = std::max(lp1 + cs.L_neg, lp1 + cs.L_pos) - base;
            if (gn > best.gain + 1e-12) {
                best.k = j;
                best.gain = gn;
                best.cls = (cs.L_pos >= cs.L_neg) ? 1 : -1;
            }
        }
        for (std::size_t k : act) {
            if (locked_[k]) continue;
            std::vector<std::size_t> others;
            others.reserve(act.size());
            for (std::size_t o : act) {
                if (o != k) others.push_back(o);
            }
            const auto j = static_cast<Eigen::Index>(k);
            Vector x = Xs_.col(j);
            if (!others.empty()) {
                const Matrix Qo = basis(others);
                x -= Qo * (Qo.transpose() * x);
            }
            const double gt = x.squaredNorm();
            const Vector rk = r_ + Xs_.col(j) * b_[j];
            if (gt < 1e-10) continue;
            const ColScore cs = score(x.dot(rk), gt, rk.squaredNorm());
            const double Lc = b_[j] >= 0.0 ? cs.L_pos : cs.L_neg;
            const double gn = (lp0 + cs.L_zero) - (lp1 + Lc);
            if (gn > best.gain + 1e-12) {
                best.k = j;
                best.gain = gn;
                best.cls = 0;
            }
        }
        return best;
    }

    Eigen::Index n_, P_;
    Matrix Xs_;
    Vector yc_, r_, b_, g_;
    std::vector<double> col_mean_, col_sd_;
    std::vector<bool> active_, locked_;
    std::vector<std::size_t> order_;
    double y_mean_ = 0.0;
    double mu_ = 1.0, sig_v2_ = 1.0, p0_ = 0.99, sig_e2_ = 1.0;
};

SemmsOutcome SemmsEngine::run(double delta, std::size_t max_moves) {
    SemmsOutcome out;
    for (int s = 0; s < 5; ++s) em_sweep();

    std::size_t moves = 0;
    while (moves < max_moves) {
        if (active_indices().size() + 1 >= static_cast<std::size_t>(n_)) {
            throw Saturated("semms_step: active set reached n-1 columns");
        }
        const Move mv = best_move();
        if (mv.k < 0 || mv.gain <= delta) break;
        const auto k = static_cast<std::size_t>(mv.k);
        if (mv.cls == 0) {
            r_ += Xs_.col(mv.k) * b_[mv.k];
            b_[mv.k] = 0.0;
            active_[k] = false;
        } else {
            active_[k] = true;
        }
        em_sweep();
        em_sweep();
        ++moves;
    }
    out.converged = (moves < max_moves);
    out.moves = moves;

    // Final classification: report posteriors for every column and keep the
    // active columns whose posterior class is non-null.
    out.gamma_post.resize(P_, 3);
    const std::vector<std::size_t> act = active_indices();
    for (Eigen::Index j = 0; j < P_; ++j) {
        const auto k = static_cast<std::size_t>(j);
        ColScore cs;
        if (active_[k]) {
            std::vector<std::size_t> others;
            for (std::size_t o : act) {
                if (o != k) others.push_back(o);
            }
            Vector x = Xs_.col(j);
            if (!others.empty()) {
                const Matrix Qo = basis(others);
                x -= Qo * (Qo.transpose() * x);
            }
            const Vector rk = r_ + Xs_.col(j) * b_[j];
            const double gt = x.squaredNorm();
            cs = (gt < 1e-10) ? coordinate_score(j) : score(x.dot(rk), gt, rk.squaredNorm());
        } else {
            cs = coordinate_score(j);
        }
        const Eigen::Vector3d p = posterior_from(cs);
        out.gamma_post.row(j) = p.transpose();
        int argmax = 1;
        if (p[0] >= p[1] && p[0] >= p[2]) argmax = 0;
        else if (p[2] > p[1] && p[2] > p[0]) argmax = 2;
        if (active_[k] && (locked_[k] || argmax != 1)) out.S.push_back(k);
    }
    out.params = params();
    return out;
}

QuantileFit qrem_on_subset(const Vector& y, const Matrix& X,
                           const std::vector<std::size_t>& S, Quantile q,
                           const QremOptions& opts, Matrix* design_out = nullptr) {
    const auto n = X.rows();
    Matrix D(n, static_cast<Eigen::Index>(S.size() + 1));
    D.col(0).setOnes();
    for (std::size_t j = 0; j < S.size(); ++j) {
        D.col(static_cast<Eigen::Index>(j + 1)) = X.col(static_cast<Eigen::Index>(S[j]));
    }
    if (design_out) *design_out = D;
    return fit_qrem(D, y, q, opts);
}

}  // namespace

std::vector<std::size_t> init_candidates(const Vector& y, const Matrix& X, Quantile q,
                                         const InitStrategy& strategy) {
    const auto n = X.rows();
    const auto P = X.cols();
    if (y.size() != n) throw DimensionMismatch("init_candidates: X and y row counts disagree");

    QremOptions screen_opts;
    screen_opts.max_iter = 200;

    auto top_k = [&](const std::vector<double>& score, std::size_t K) {
        std::vector<std::size_t> idx(score.size());
        for (std::size_t j = 0; j < idx.size(); ++j) idx[j] = j;
        std::stable_sort(idx.begin(), idx.end(),
                         [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
        idx.resize(std::min(K, idx.size()));
        std::sort(idx.begin(), idx.end());
        return idx;
    };

    if (const auto* one = std::get_if<InitOneAtATime>(&strategy)) {
        if (one->K == 0 || one->K >= static_cast<std::size_t>(n)) {
            throw InvalidStrategyParams("init_candidates: need 0 < K < n");
        }
        std::vector<double> score(static_cast<std::size_t>(P), 0.0);
        Matrix D(n, 2);
        D.col(0).setOnes();
        for (Eigen::Index j = 0; j < P; ++j) {
            D.col(1) = X.col(j);
            try {
                const QuantileFit f = fit_qrem(D, y, q, screen_opts);
                const AsymptoticCov ac = asymptotic_cov(f, D);
                if (ac.se[1] > 0.0) score[static_cast<std::size_t>(j)] = std::abs(f.beta[1]) / ac.se[1];
            } catch (const Error&) {
                // constant or degenerate column scores zero
            }
        }
        return top_k(score, one->K);
    }
    if (const auto* ch = std::get_if<InitChunked>(&strategy)) {
        if (ch->m == 0 || ch->m >= static_cast<std::size_t>(n) || ch->K == 0 ||
            ch->K >= static_cast<std::size_t>(n)) {
            throw InvalidStrategyParams("init_candidates: need 0 < m < n and 0 < K < n");
        }
        std::vector<double> score(static_cast<std::size_t>(P), 0.0);
        for (std::size_t start = 0; start < static_cast<std::size_t>(P); start += ch->m) {
            const std::size_t stop = std::min(start + ch->m, static_cast<std::size_t>(P));
            Matrix D(n, static_cast<Eigen::Index>(stop - start + 1));
            D.col(0).setOnes();
            for (std::size_t j = start; j < stop; ++j) {
                D.col(static_cast<Eigen::Index>(j - start + 1)) = X.col(static_cast<Eigen::Index>(j));
            }
            try {
                const QuantileFit f = fit_qrem(D, y, q, screen_opts);
                const AsymptoticCov ac = asymptotic_cov(f, D);
                for (std::size_t j = start; j < stop; ++j) {
                    const auto c = static_cast<Eigen::Index>(j - start + 1);
                    if (ac.se[c] > 0.0) score[j] = std::abs(f.beta[c]) / ac.se[c];
                }
            } catch (const Error&) {
                // chunk skipped; its columns score zero
            }
        }
        return top_k(score, ch->K);
    }
    const auto& prov = std::get<InitProvided>(strategy);
    std::set<std::size_t> dedup;
    for (std::size_t k : prov.set) {
        if (k >= static_cast<std::size_t>(P)) {
            throw InvalidStrategyParams("init_candidates: provided index out of range");
        }
        dedup.insert(k);
    }
    return {dedup.begin(), dedup.end()};
}

SemmsOutcome semms_step(const Vector& y_tilde, const Matrix& X,
                        const std::vector<std::size_t>& S, double delta,
                        std::size_t max_moves,
                        const std::vector<std::size_t>& locked_in,
                        const std::vector<std::size_t>* scan_order) {
    if (y_tilde.size() != X.rows()) throw DimensionMismatch("semms_step: X and y row counts disagree");
    if (S.size() >= static_cast<std::size_t>(X.rows())) {
        throw Saturated("semms_step: initial set has n or more columns");
    }
    SemmsEngine engine(y_tilde, X, S, locked_in, scan_order);
    return engine.run(delta, max_moves);
}

namespace {

SelectResult fit_select_once(const Vector& y, const Matrix& X, Quantile q,
                             const SelectOptions& opts,
                             const std::vector<std::size_t>& S0,
                             const std::vector<std::size_t>* scan_order) {
    const auto n = X.rows();
    const double eps = opts.epsilon * static_cast<double>(n);

    std::vector<std::size_t> S = S0;
    for (std::size_t k : opts.locked_in) {
        if (std::find(S.begin(), S.end(), k) == S.end()) S.push_back(k);
    }
    std::sort(S.begin(), S.end());

    SelectResult out;
    SemmsOutcome last;
    double ell = 0.0;
    for (std::size_t outer = 0; outer < opts.max_outer; ++outer) {
        const double ell_prev = ell;
        const QuantileFit f = qrem_on_subset(y, X, S, q, opts.qrem);
        const Vector u = f.residuals;
        ell = -2.0 * check_loss_sum(u, q);
        out.state.loglik_trace.push_back(ell);

        const Vector y_tilde = y - (1.0 - 2.0 * q.value()) * u.cwiseAbs();
        last = semms_step(y_tilde, X, S, opts.delta, opts.max_moves, opts.locked_in, scan_order);
        S = last.S;

        if (outer > 0 && std::abs(ell - ell_prev) < eps) break;
    }
    out.fit = qrem_on_subset(y, X, S, q, opts.qrem);
    out.state.S = S;
    out.state.gamma_post = last.gamma_post;
    out.state.params = last.params;
    out.terminal_sets.push_back(S);
    return out;
}

}  // namespace

SelectResult fit_select(const Vector& y, const Matrix& X, Quantile q,
                        const SelectOptions& opts) {
    if (!(opts.epsilon > 0.0)) throw InvalidParameter("fit_select: epsilon must be positive");
    const std::vector<std::size_t> S0 = init_candidates(y, X, q, opts.init);

    SelectResult best = fit_select_once(y, X, q, opts, S0, nullptr);
    if (opts.randomized_restarts == 0) return best;

    std::vector<std::vector<std::size_t>> seen = best.terminal_sets;
    RngStream rng = opts.rng;
    for (std::size_t r = 0; r < opts.randomized_restarts; ++r) {
        RngStream sub = rng.substream(r);
        std::vector<std::size_t> order(static_cast<std::size_t>(X.cols()));
        for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
        for (std::size_t j = order.size(); j > 1; --j) {
            const auto pick = static_cast<std::size_t>(sub.next_u64() % j);
            std::swap(order[j - 1], order[pick]);
        }
        SelectResult cand = fit_select_once(y, X, q, opts, S0, &order);
        if (std::find(seen.begin(), seen.end(), cand.state.S) == seen.end()) {
            seen.push_back(cand.state.S);
        }
        const double cand_ell = -2.0 * check_loss_sum(cand.fit.residuals, q);
        const double best_ell = -2.0 * check_loss_sum(best.fit.residuals, q);
        if (cand_ell > best_ell) {
            cand.terminal_sets.clear();
            best = std::move(cand);
        }
    }
    best.terminal_sets = std::move(seen);
    return best;
}

QuantileGraph neighborhood_graph(const Matrix& data, const std::vector<std::string>& labels,
                                 const std::vector<double>& q_grid,
                                 const SelectOptions& opts, int jobs) {
    const auto P = data.cols();
    if (P < 3) throw InvalidParameter("neighborhood_graph: need at least 3 columns");
    if (labels.size() != static_cast<std::size_t>(P)) {
        throw DimensionMismatch("neighborhood_graph: labels disagree with columns");
    }

    QuantileGraph graph;
    graph.nodes = labels;

    struct Job { Eigen::Index node; double q; };
    std::vector<Job> jobs_list;
    for (Eigen::Index a = 0; a < P; ++a) {
        for (double q : q_grid) jobs_list.push_back({a, q});
    }
    std::vector<std::vector<GraphEdge>> results(jobs_list.size());
    std::vector<std::string> fails(jobs_list.size());

    parallel_for(jobs_list.size(), jobs, [&](std::size_t ji) {
        const Job job = jobs_list[ji];
        Matrix Xo(data.rows(), P - 1);
        std::vector<Eigen::Index> colmap;
        Eigen::Index at = 0;
        for (Eigen::Index b = 0; b < P; ++b) {
            if (b == job.node) continue;
            Xo.col(at++) = data.col(b);
            colmap.push_back(b);
        }
        try {
            const SelectResult res = fit_select(data.col(job.node), Xo, Quantile(job.q), opts);
            for (std::size_t j = 0; j < res.state.S.size(); ++j) {
                const double coef = res.fit.beta[static_cast<Eigen::Index>(j + 1)];
                GraphEdge e;
                e.from = labels[static_cast<std::size_t>(job.node)];
                e.to = labels[static_cast<std::size_t>(colmap[res.state.S[j]])];
                e.q = job.q;
                e.sign = coef >= 0.0 ? 1 : -1;
                e.strength = coef;
                results[ji].push_back(std::move(e));
            }
        } catch (const Error& err) {
            fails[ji] = labels[static_cast<std::size_t>(job.node)] + " @q=" +
                        std::to_string(job.q) + ": " + err.what();
        }
    });

    for (std::size_t ji = 0; ji < jobs_list.size(); ++ji) {
        for (auto& e : results[ji]) graph.edges.push_back(std::move(e));
        if (!fails[ji].empty()) graph.failures.push_back(fails[ji]);
    }
    return graph;
}

void write_edges_csv(const QuantileGraph& graph, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open " + path);
    out << "from,to,q,sign,strength\n";
    char buf[64];
    for (const auto& e : graph.edges) {
        std::snprintf(buf, sizeof buf, "%.17g", e.q);
        out << e.from << ',' << e.to << ',' << buf << ',' << e.sign << ',';
        std::snprintf(buf, sizeof buf, "%.17g", e.strength);
        out << buf << '\n';
    }
}

void write_graph_dot(const QuantileGraph& graph, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open " + path);
    out << "digraph quantile_graph {\n";
    for (const auto& node : graph.nodes) out << "  \"" << node << "\";\n";
    std::map<std::pair<std::string, std::string>, std::set<std::string>> seen;
    for (const auto& e : graph.edges) {
        char qb[32];
        std::snprintf(qb, sizeof qb, "%g", e.q);
        seen[{e.from, e.to}].insert(qb);
    }
    for (const auto& e : graph.edges) {
        char qb[32];
        std::snprintf(qb, sizeof qb, "%g", e.q);
        const bool both = seen.count({e.to, e.from}) && seen[{e.to, e.from}].count(qb);
        out << "  \"" << e.from << "\" -> \"" << e.to << "\" [label=\"q=" << qb
            << "\", color=" << (e.sign > 0 ? "blue" : "red");
        if (both) out << ", dir=both";
        out << "];\n";
    }
    out << "}\n";
}

}  // namespace qremkit
