#include "qremkit/mixed.hpp"

#include "qremkit/numkit.hpp"

#include <algorithm>
#include <cmath>

namespace qremkit {

namespace {

constexpr double kGammaLo = 1e-10;
constexpr double kGammaHi = 1e8;

/// Per-F-step sufficient statistics for the Woodbury form of
/// M = diag(w) + gamma Z Z^T.
struct BStepStats {
    Vector dg;    // per-group sum of 1/w
    Matrix sX;    // G x P, per-group sums of x_i / w_i
    Vector sy;    // per-group sums of y*_i / w_i
    Matrix A0;    // X^T W^{-1} X
    Vector b0;    // X^T W^{-1} y*
    double c0 = 0.0;
    Eigen::Index n = 0, P = 0;
    int G = 0;
};

BStepStats accumulate_stats(const Matrix& X, const Vector& ystar, const Vector& w,
                            const std::vector<int>& groups, int G) {
    BStepStats s;
    s.n = X.rows();
    s.P = X.cols();
    s.G = G;
    s.dg = Vector::Zero(G);
    s.sX = Matrix::Zero(G, s.P);
    s.sy = Vector::Zero(G);
    const Vector iw = w.cwiseInverse();
    for (Eigen::Index i = 0; i < s.n; ++i) {
        const int g = groups[static_cast<std::size_t>(i)];
        s.dg[g] += iw[i];
        s.sX.row(g) += iw[i] * X.row(i);
        s.sy[g] += iw[i] * ystar[i];
    }
    const Matrix Xw = iw.asDiagonal() * X;
    s.A0 = X.transpose() * Xw;
    s.b0 = Xw.transpose() * ystar;
    s.c0 = (ystar.array().square() * iw.array()).sum();
    return s;
}

struct ProfiledEval {
    double reml = 0.0;
    Vector beta;
    double quad = 0.0;  // r^T M^{-1} r at the GLS solution
};

ProfiledEval eval_profiled(double gamma, const BStepStats& s) {
    const Vector D = (s.dg.array() + 1.0 / gamma).inverse();
    Matrix A = s.A0;
    A.noalias() -= s.sX.transpose() * D.asDiagonal() * s.sX;
    Vector b = s.b0 - s.sX.transpose() * (D.asDiagonal() * s.sy);
    const double c = s.c0 - (D.array() * s.sy.array().square()).sum();

    Eigen::LDLT<Matrix> ldlt(A);
    const Vector dvec = ldlt.vectorD().cwiseAbs();
    if (!(dvec.maxCoeff() > 0.0) || dvec.minCoeff() < kWlsRankTol * dvec.maxCoeff()) {
        throw RankDeficient("fit_eqrem: collapsed design in the B-step");
    }
    ProfiledEval out;
    out.beta = ldlt.solve(b);
    // one refinement step; floored weights make A badly scaled
    out.beta += ldlt.solve(b - A * out.beta);
    out.quad = std::max(c - out.beta.dot(b), 1e-300);

    const double logdetA = dvec.array().log().sum();
    const double logdetM_core = (1.0 + gamma * s.dg.array()).log().sum();
    const double nmp = static_cast<double>(s.n - s.P);
    out.reml = -0.5 * (nmp * (std::log(out.quad / nmp) + 1.0) + logdetM_core + logdetA);
    return out;
}

/// Golden-section maximization of the profiled REML over log gamma.
double maximize_reml(const BStepStats& s) {
    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = std::log(kGammaLo), b = std::log(kGammaHi);
    double c1 = b - invphi * (b - a);
    double c2 = a + invphi * (b - a);
    double f1 = eval_profiled(std::exp(c1), s).reml;
    double f2 = eval_profiled(std::exp(c2), s).reml;
    while (b - a > 1e-8) {
        if (f1 < f2) {
            a = c1; c1 = c2; f1 = f2;
            c2 = a + invphi * (b - a);
            f2 = eval_profiled(std::exp(c2), s).reml;
        } else {
            b = c2; c2 = c1; f2 = f1;
            c1 = b - invphi * (b - a);
            f1 = eval_profiled(std::exp(c1), s).reml;
        }
    }
    return std::exp(0.5 * (a + b));
}

}  // namespace

MixedSpec MixedSpec::from_groups(Matrix X, std::vector<int> groups) {
    MixedSpec spec;
    spec.X = std::move(X);
    spec.groups = std::move(groups);
    int G = 0;
    for (int g : spec.groups) G = std::max(G, g + 1);
    spec.G = G;
    return spec;
}

void MixedSpec::validate() const {
    if (static_cast<Eigen::Index>(groups.size()) != X.rows()) {
        throw DimensionMismatch("MixedSpec: group labels and X rows disagree");
    }
    if (G < 1) throw InvalidParameter("MixedSpec: no groups");
    std::vector<int> counts(static_cast<std::size_t>(G), 0);
    for (int g : groups) {
        if (g < 0 || g >= G) throw InvalidParameter("MixedSpec: group id out of range");
        ++counts[static_cast<std::size_t>(g)];
    }
    for (int c : counts) {
        if (c == 0) throw InvalidParameter("MixedSpec: empty group");
    }
}

MixedFit fit_eqrem(const MixedSpec& spec, const Vector& y, Quantile q,
                   const QremOptions& opts) {
    spec.validate();
    const Matrix& X = spec.X;
    const auto n = X.rows();
    const auto P = X.cols();
    const int G = spec.G;
    if (y.size() != n) throw DimensionMismatch("fit_eqrem: X and y row counts disagree");
    if (n <= P) throw DimensionMismatch("fit_eqrem: need n > P");

    const double qv = q.value();
    const double guard = opts.zero_guard * response_scale(y);
    const double eps = opts.epsilon * static_cast<double>(n);

    MixedFit fit;
    fit.q = qv;
    fit.zero_guard_abs = guard;

    Vector beta = solve_ols_ridge_fallback(X, y);
    Vector v = Vector::Zero(G);
    double gamma = kGammaLo, sigma_e2 = 1.0;
    Vector w(n);

    // A single group is confounded with the intercept: pin the variance.
    const bool degenerate = (G < 2);

    for (std::size_t it = 1; it <= opts.max_iter; ++it) {
        Vector u = y - X * beta;
        for (Eigen::Index i = 0; i < n; ++i) {
            u[i] -= v[spec.groups[static_cast<std::size_t>(i)]];
        }
        for (Eigen::Index i = 0; i < n; ++i) w[i] = std::max(std::abs(u[i]), guard);
        const Vector ystar = y - (1.0 - 2.0 * qv) * w;

        const BStepStats stats = accumulate_stats(X, ystar, w, spec.groups, G);
        gamma = degenerate ? kGammaLo : maximize_reml(stats);
        const ProfiledEval ev = eval_profiled(gamma, stats);
        sigma_e2 = ev.quad / static_cast<double>(n - P);

        // BLUP: v_g = (sum_{i in g} r_i / w_i) / (1/gamma + d_g)
        Vector srg = Vector::Zero(G);
        const Vector r = ystar - X * ev.beta;
        for (Eigen::Index i = 0; i < n; ++i) {
            srg[spec.groups[static_cast<std::size_t>(i)]] += r[i] / w[i];
        }
        const Vector v_new = srg.array() / (stats.dg.array() + 1.0 / gamma);

        // Monitor: conditional log-likelihood of y given (v, w) at variance w,
        // compared between the previous and the new coefficient vector.
        Vector zv(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            zv[i] = v_new[spec.groups[static_cast<std::size_t>(i)]];
        }
        const Vector base = y - zv - (1.0 - 2.0 * qv) * w;
        const Vector r_old = base - X * beta;
        const Vector r_new = base - X * ev.beta;
        const double delta =
            0.5 * std::abs((r_old.array().square() / w.array()).sum() -
                           (r_new.array().square() / w.array()).sum());

        const double loglik =
            -0.5 * ((r_new.array().square() / w.array()).sum() +
                    (2.0 * M_PI * w.array()).log().sum());
        fit.monitor_trace.push_back(loglik);

        // Exact-maximization check for the B-step: the joint objective
        // l(y|v,w,beta) - v^T v / (2K) under this iteration's (w, K) cannot
        // decrease when moving to the new (beta, v).
        {
            const double K = std::max(gamma * sigma_e2, 1e-300);
            Vector zv_old(n);
            for (Eigen::Index i = 0; i < n; ++i) {
                zv_old[i] = v[spec.groups[static_cast<std::size_t>(i)]];
            }
            const Vector r_prev = y - zv_old - (1.0 - 2.0 * qv) * w - X * beta;
            const double h_prev = -0.5 * (r_prev.array().square() / (sigma_e2 * w.array())).sum() -
                                  0.5 * v.squaredNorm() / K;
            const double h_new = -0.5 * (r_new.array().square() / (sigma_e2 * w.array())).sum() -
                                 0.5 * v_new.squaredNorm() / K;
            fit.bstep_gain_trace.push_back(h_new - h_prev);
        }

        beta = ev.beta;
        v = v_new;
        fit.iterations = it;
        if (delta < eps) {
            fit.converged = true;
            break;
        }
    }

    fit.beta = beta;
    fit.v = v;
    fit.sigma_e2 = sigma_e2;
    fit.K_var = gamma * sigma_e2;
    fit.variance_collapsed = (gamma <= kGammaLo * (1.0 + 1e-6));
    Vector u = y - X * beta;
    for (Eigen::Index i = 0; i < n; ++i) u[i] -= v[spec.groups[static_cast<std::size_t>(i)]];
    fit.residuals = u;
    for (Eigen::Index i = 0; i < n; ++i) w[i] = std::max(std::abs(u[i]), guard);
    fit.weights = w;
    return fit;
}

BootstrapCI bootstrap_ci(const MixedSpec& spec, const Vector& y, Quantile q,
                         std::size_t reps, double level, RngStream rng,
                         const QremOptions& opts, int jobs) {
    spec.validate();
    if (reps < 50) throw InvalidParameter("bootstrap_ci: need reps >= 50");
    if (!(level > 0.0 && level < 1.0)) throw InvalidParameter("bootstrap_ci: level outside (0,1)");

    const int G = spec.G;
    const auto P = spec.X.cols();

    // Row indices per group, in data order.
    std::vector<std::vector<Eigen::Index>> rows(static_cast<std::size_t>(G));
    for (Eigen::Index i = 0; i < spec.X.rows(); ++i) {
        rows[static_cast<std::size_t>(spec.groups[static_cast<std::size_t>(i)])].push_back(i);
    }

    Matrix draws(reps, P);
    std::vector<char> ok(reps, 0);

    parallel_for(reps, jobs, [&](std::size_t rep) {
        RngStream sub = rng.substream(rep);
        std::vector<int> pick(static_cast<std::size_t>(G));
        Eigen::Index nb = 0;
        for (int g = 0; g < G; ++g) {
            const int j = static_cast<int>(sub.next_u64() % static_cast<std::uint64_t>(G));
            pick[static_cast<std::size_t>(g)] = j;
            nb += static_cast<Eigen::Index>(rows[static_cast<std::size_t>(j)].size());
        }
        Matrix Xb(nb, P);
        Vector yb(nb);
        std::vector<int> gb(static_cast<std::size_t>(nb));
        Eigen::Index at = 0;
        for (int g = 0; g < G; ++g) {
            for (Eigen::Index i : rows[static_cast<std::size_t>(pick[static_cast<std::size_t>(g)])]) {
                Xb.row(at) = spec.X.row(i);
                yb[at] = y[i];
                gb[static_cast<std::size_t>(at)] = g;
                ++at;
            }
        }
        try {
            const MixedFit f = fit_eqrem(MixedSpec::from_groups(std::move(Xb), std::move(gb)), yb, q, opts);
            if (f.converged) {
                draws.row(static_cast<Eigen::Index>(rep)) = f.beta.transpose();
                ok[rep] = 1;
            }
        } catch (const Error&) {
            // dropped and counted below
        }
    });

    std::size_t good = 0;
    for (char c : ok) good += (c != 0);
    if (good * 5 < reps * 4) {
        throw TooFewSuccessfulReps("bootstrap_ci: fewer than 80% of replicates usable");
    }

    BootstrapCI out;
    out.level = level;
    out.reps = reps;
    out.successful = good;
    out.draws.resize(good, P);
    Eigen::Index at = 0;
    for (std::size_t rep = 0; rep < reps; ++rep) {
        if (ok[rep]) out.draws.row(at++) = draws.row(static_cast<Eigen::Index>(rep));
    }
    out.lower.resize(P);
    out.upper.resize(P);
    const double alpha = (1.0 - level) / 2.0;
    for (Eigen::Index j = 0; j < P; ++j) {
        std::vector<double> col(out.draws.col(j).data(), out.draws.col(j).data() + good);
        out.lower[j] = quantile_type7(col, alpha);
        out.upper[j] = quantile_type7(std::move(col), 1.0 - alpha);
    }
    return out;
}

}  // namespace qremkit
