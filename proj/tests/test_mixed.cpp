#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "qremkit/mixed.hpp"
#include "qremkit/numkit.hpp"

#include <cmath>

using namespace qremkit;

namespace {

struct Panel {
    MixedSpec spec;
    Vector y;
};

/// y_it = 2 + x_it + u_i + eps_it over G groups x T times
Panel make_panel(RngStream& rng, int G, int T, double re_sd, double eps_sd) {
    const Eigen::Index n = static_cast<Eigen::Index>(G) * T;
    Matrix X(n, 2);
    Vector y(n);
    std::vector<int> groups(static_cast<std::size_t>(n));
    std::vector<double> u(static_cast<std::size_t>(G));
    for (int g = 0; g < G; ++g) u[static_cast<std::size_t>(g)] = re_sd > 0 ? rng.normal(0.0, re_sd) : 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const int g = static_cast<int>(i) / T;
        const int t = static_cast<int>(i) % T + 1;
        const double x = rng.normal(t / 4.0, 0.1);
        X(i, 0) = 1.0;
        X(i, 1) = x;
        groups[static_cast<std::size_t>(i)] = g;
        y[i] = 2.0 + x + u[static_cast<std::size_t>(g)] +
               (eps_sd > 0 ? rng.normal(0.0, eps_sd) : 0.0);
    }
    return {MixedSpec::from_groups(std::move(X), std::move(groups)), std::move(y)};
}

}  // namespace

TEST_CASE("no group effect: matches the fixed-effect fit, BLUP near zero") {
    RngStream rng(41, 0);
    Panel p = make_panel(rng, 25, 8, 0.0, 0.3);
    const MixedFit mf = fit_eqrem(p.spec, p.y, Quantile(0.5));
    const QuantileFit qf = fit_qrem(p.spec.X, p.y, Quantile(0.5));
    const AsymptoticCov ac = asymptotic_cov(qf, p.spec.X);
    for (Eigen::Index j = 0; j < 2; ++j) {
        CHECK(std::abs(mf.beta[j] - qf.beta[j]) < 2.0 * ac.se[j]);
    }
    CHECK(mf.v.cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("one observation per group: BLUP shrinks raw residuals") {
    RngStream rng(42, 0);
    const int G = 40;
    Matrix X(G, 2);
    Vector y(G);
    std::vector<int> groups(G);
    for (int i = 0; i < G; ++i) {
        X(i, 0) = 1.0;
        X(i, 1) = rng.uniform(0.0, 1.0);
        groups[static_cast<std::size_t>(i)] = i;
        y[i] = 1.0 + X(i, 1) + rng.normal(0.0, 0.5);
    }
    const MixedSpec spec = MixedSpec::from_groups(std::move(X), std::move(groups));
    const MixedFit mf = fit_eqrem(spec, y, Quantile(0.5));
    const Vector raw = y - spec.X * mf.beta;
    for (int g = 0; g < G; ++g) {
        CHECK(std::abs(mf.v[g]) < std::abs(raw[g]) + 1e-12);
    }
}

TEST_CASE("BLUP averages to zero when X has an intercept") {
    RngStream rng(43, 0);
    Panel p = make_panel(rng, 60, 4, 0.5, 0.1);
    const MixedFit mf = fit_eqrem(p.spec, p.y, Quantile(0.3));
    CHECK(std::abs(mf.v.mean()) < 1e-8);
}

TEST_CASE("single group pins the variance and matches the fixed fit") {
    RngStream rng(44, 0);
    const Eigen::Index n = 80;
    Matrix X(n, 2);
    Vector y(n);
    std::vector<int> groups(static_cast<std::size_t>(n), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
        X(i, 0) = 1.0;
        X(i, 1) = rng.uniform(0.0, 1.0);
        y[i] = 2.0 - X(i, 1) + rng.normal(0.0, 0.4);
    }
    const MixedSpec spec = MixedSpec::from_groups(X, groups);
    const MixedFit mf = fit_eqrem(spec, y, Quantile(0.5));
    const QuantileFit qf = fit_qrem(X, y, Quantile(0.5));
    CHECK(mf.variance_collapsed);
    CHECK((mf.beta - qf.beta).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("scenario-25 panel: converges within 1000 iterations, sane estimates") {
    RngStream rng(45, 0);
    Panel p = make_panel(rng, 100, 4, 0.5, 0.1);
    const MixedFit mf = fit_eqrem(p.spec, p.y, Quantile(0.5));
    CHECK(mf.converged);
    CHECK(mf.iterations <= 1000);
    CHECK(mf.beta[1] == doctest::Approx(1.0).epsilon(0.05));
    CHECK(mf.K_var > 0.1);
    CHECK(mf.K_var < 0.5);
    for (double gain : mf.bstep_gain_trace) CHECK(gain >= -1e-8);
}

TEST_CASE("monitor trace settles at termination") {
    RngStream rng(46, 0);
    Panel p = make_panel(rng, 50, 4, 0.5, 0.1);
    const MixedFit mf = fit_eqrem(p.spec, p.y, Quantile(0.7));
    REQUIRE(mf.monitor_trace.size() >= 2);
    const auto& tr = mf.monitor_trace;
    const double first_step = std::abs(tr[1] - tr[0]);
    const double last_step = std::abs(tr[tr.size() - 1] - tr[tr.size() - 2]);
    CHECK(last_step <= first_step + 1e-8);
}

TEST_CASE("bootstrap: noiseless data gives zero-width intervals") {
    RngStream rng(47, 0);
    Panel p = make_panel(rng, 20, 3, 0.0, 0.0);  // exact linear data
    const BootstrapCI ci = bootstrap_ci(p.spec, p.y, Quantile(0.5), 60, 0.95, RngStream(1, 1));
    CHECK((ci.upper - ci.lower).cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("bootstrap: percentile intervals nest across levels") {
    RngStream rng(48, 0);
    Panel p = make_panel(rng, 30, 4, 0.3, 0.2);
    const RngStream boot_rng(5, 5);
    const BootstrapCI wide = bootstrap_ci(p.spec, p.y, Quantile(0.5), 80, 0.95, boot_rng);
    const BootstrapCI narrow = bootstrap_ci(p.spec, p.y, Quantile(0.5), 80, 0.50, boot_rng);
    for (Eigen::Index j = 0; j < 2; ++j) {
        CHECK(narrow.lower[j] >= wide.lower[j] - 1e-12);
        CHECK(narrow.upper[j] <= wide.upper[j] + 1e-12);
    }
}

TEST_CASE("bootstrap input validation") {
    RngStream rng(49, 0);
    Panel p = make_panel(rng, 10, 3, 0.2, 0.2);
    CHECK_THROWS_AS(bootstrap_ci(p.spec, p.y, Quantile(0.5), 10, 0.95, RngStream(1, 1)),
                    InvalidParameter);
    CHECK_THROWS_AS(bootstrap_ci(p.spec, p.y, Quantile(0.5), 60, 1.5, RngStream(1, 1)),
                    InvalidParameter);
}
