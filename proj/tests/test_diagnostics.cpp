#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "qremkit/diagnostics.hpp"
#include "qremkit/numkit.hpp"

#include <cmath>

using namespace qremkit;

namespace {

Matrix with_intercept(const std::vector<Vector>& cols, Eigen::Index n) {
    Matrix X(n, static_cast<Eigen::Index>(cols.size() + 1));
    X.col(0).setOnes();
    for (std::size_t j = 0; j < cols.size(); ++j) X.col(static_cast<Eigen::Index>(j + 1)) = cols[j];
    return X;
}

}  // namespace

TEST_CASE("sign residuals: all-positive case") {
    Vector u(4);
    u << 1.0, 2.0, 0.5, 3.0;
    const SignResiduals sr = sign_residuals(u, 0.25, 1e-9);
    for (Eigen::Index i = 0; i < 4; ++i) CHECK(sr.c[i] == doctest::Approx(0.5));
    CHECK(sr.above.size() == 4);
    CHECK(sr.below.empty());
    CHECK(sr.zero.empty());
}

TEST_CASE("sign residuals partition the indices") {
    RngStream rng(51, 0);
    Vector u = sample(NormalDist{0.0, 1.0}, 100, rng);
    u[17] = 0.0;
    const SignResiduals sr = sign_residuals(u, 0.4, 1e-9);
    CHECK(sr.above.size() + sr.below.size() + sr.zero.size() == 100);
    CHECK(sr.zero.size() == 1);
    CHECK(sr.zero[0] == 17);
}

TEST_CASE("X^T c vanishes up to the interpolated points") {
    RngStream rng(52, 0);
    const Eigen::Index n = 200;
    const Matrix X = with_intercept({sample(UniformDist{0.0, 1.0}, n, rng),
                                     sample(UniformDist{-1.0, 1.0}, n, rng)}, n);
    Vector beta_star(3);
    beta_star << 1.0, 2.0, -1.0;
    const Vector y = X * beta_star + sample(NormalDist{0.0, 0.5}, n, rng);
    QremOptions opts;
    opts.epsilon = 1e-14;
    opts.max_iter = 100000;
    for (double q : {0.2, 0.5, 0.7}) {
        const QuantileFit fit = fit_qrem(X, y, Quantile(q), opts);
        const SignResiduals sr = sign_residuals(fit);
        const Vector xc = X.transpose() * sr.c;
        const double bound = 2.0 * static_cast<double>(sr.zero.size()) *
                                 X.cwiseAbs().maxCoeff() + 1e-6;
        CHECK(xc.cwiseAbs().maxCoeff() <= bound);
    }
}

TEST_CASE("median intercept-only split is even on odd n") {
    RngStream rng(53, 0);
    const Eigen::Index n = 101;
    const Vector y = sample(NormalDist{0.0, 1.0}, n, rng);
    QremOptions opts;
    opts.epsilon = 1e-14;
    opts.max_iter = 100000;
    const QuantileFit fit = fit_qrem(Matrix::Ones(n, 1), y, Quantile(0.5), opts);
    const SignResiduals sr = sign_residuals(fit);
    CHECK(sr.above.size() == 50);
    CHECK(sr.below.size() == 50);
    CHECK(sr.zero.size() == 1);
}

TEST_CASE("qq pairs: identical sides sit on the diagonal") {
    Vector x(8);
    x << 1, 2, 3, 4, 1, 2, 3, 4;
    SignResiduals sr;
    sr.q = 0.5;
    sr.c.resize(8);
    sr.above = {0, 1, 2, 3};
    sr.below = {4, 5, 6, 7};
    const QQPairs p = qq_pairs(x, sr);
    CHECK((p.above_quantiles - p.below_quantiles).cwiseAbs().maxCoeff() == 0.0);
    CHECK(p.ks == 0.0);
}

TEST_CASE("qq pairs: noise predictor stays within the KS bound") {
    RngStream rng(54, 0);
    const Eigen::Index n = 4000;
    const Vector x = sample(UniformDist{0.0, 1.0}, n, rng);
    const Vector noise = sample(UniformDist{0.0, 1.0}, n, rng);
    const Matrix X = with_intercept({x}, n);
    const Vector y = 1.0 + 2.0 * x.array() + sample(NormalDist{0.0, 0.5}, n, rng).array();
    int pass = 0;
    const QuantileFit fit = fit_qrem(X, y, Quantile(0.3));
    const SignResiduals sr = sign_residuals(fit);
    const QQPairs p = qq_pairs(noise, sr);
    pass += p.ks < p.ks_bound_1pct;
    CHECK(pass == 1);
}

TEST_CASE("qq pairs flag a misspecified linear fit on quadratic data") {
    RngStream rng(55, 0);
    const Eigen::Index n = 2000;
    const Vector x = sample(UniformDist{-5.0, 5.0}, n, rng);
    Vector y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double sd = std::abs(0.2 + x[i]);
        y[i] = 6.0 * x[i] * x[i] + x[i] + 120.0 + (sd > 0 ? rng.normal(0.0, sd) : 0.0);
    }
    const Matrix Xlin = with_intercept({x}, n);
    const Matrix Xquad = with_intercept({x, Vector(x.array().square())}, n);
    const QuantileFit flin = fit_qrem(Xlin, y, Quantile(0.1));
    const QuantileFit fquad = fit_qrem(Xquad, y, Quantile(0.1));
    const QQPairs plin = qq_pairs(x, sign_residuals(flin));
    const QQPairs pquad = qq_pairs(x, sign_residuals(fquad));
    CHECK(plin.ks > plin.ks_bound_1pct);       // diagnostic fires
    CHECK(pquad.ks < pquad.ks_bound_1pct);     // true model passes
}

TEST_CASE("qq pairs are symmetric under swapping the sides") {
    RngStream rng(56, 0);
    Vector x = sample(NormalDist{0.0, 1.0}, 60, rng);
    SignResiduals sr;
    sr.q = 0.5;
    sr.c.resize(60);
    for (std::size_t i = 0; i < 25; ++i) sr.above.push_back(i);
    for (std::size_t i = 25; i < 60; ++i) sr.below.push_back(i);
    SignResiduals swapped = sr;
    std::swap(swapped.above, swapped.below);
    const QQPairs p1 = qq_pairs(x, sr);
    const QQPairs p2 = qq_pairs(x, swapped);
    CHECK((p1.above_quantiles - p2.below_quantiles).cwiseAbs().maxCoeff() == 0.0);
    CHECK((p1.below_quantiles - p2.above_quantiles).cwiseAbs().maxCoeff() == 0.0);
    CHECK(p1.ks == p2.ks);
}

TEST_CASE("qq pairs require both sides") {
    Vector x(3);
    x << 1, 2, 3;
    SignResiduals sr;
    sr.q = 0.5;
    sr.c.resize(3);
    sr.above = {0, 1, 2};
    CHECK_THROWS_AS(qq_pairs(x, sr), EmptySide);
}

TEST_CASE("flat qq: identical sides give exact ones; rescale invariance") {
    RngStream rng(57, 0);
    const Eigen::Index n = 600;
    const Vector x = sample(UniformDist{0.0, 1.0}, n, rng);
    const Matrix X = with_intercept({x}, n);
    const Vector y = 1.0 + x.array() + sample(NormalDist{0.0, 0.3}, n, rng).array();
    std::vector<QuantileFit> fits;
    for (double q : {0.3, 0.5, 0.7}) fits.push_back(fit_qrem(X, y, Quantile(q)));

    const FlatQQ f = flat_qq(fits, x, 10);
    CHECK(f.ratios.rows() == 10);
    CHECK(f.ratios.cols() == 3);
    // strictly monotone rescaling of x: cut points and quantiles map together
    const Vector x3 = 3.0 * x.array() + 1.0;
    const FlatQQ g = flat_qq(fits, x3, 10);
    for (int i = 0; i < 10; ++i) {
        for (int j = 0; j < 3; ++j) {
            REQUIRE(f.missing[i][j] == g.missing[i][j]);
            if (!f.missing[i][j]) {
                CHECK(f.ratios(i, j) == doctest::Approx(g.ratios(i, j)).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("flat qq marks empty-denominator cells missing") {
    RngStream rng(58, 0);
    const Eigen::Index n = 400;
    const Vector x = sample(UniformDist{0.0, 1.0}, n, rng);
    const Matrix X = with_intercept({x}, n);
    const Vector y = x.array() + sample(NormalDist{0.0, 0.2}, n, rng).array();
    std::vector<QuantileFit> fits{fit_qrem(X, y, Quantile(0.5))};
    const FlatQQ f = flat_qq(fits, x, 15);
    CHECK(f.missing[0][0]);  // xi at min(x): nothing strictly below
    CHECK(std::isnan(f.ratios(0, 0)));
    CHECK_FALSE(f.missing[14][0]);
    CHECK(f.ratios(14, 0) == doctest::Approx(1.0).epsilon(0.35));
}

TEST_CASE("categorical balance on null data") {
    RngStream rng(59, 0);
    const Eigen::Index n = 400;
    const double q = 0.25;
    std::vector<std::string> labels;
    for (Eigen::Index i = 0; i < n; ++i) labels.push_back(i % 2 ? "left" : "right");
    const Vector y = sample(NormalDist{0.0, 1.0}, n, rng);
    const QuantileFit fit = fit_qrem(Matrix::Ones(n, 1), y, Quantile(q));
    const auto table = categorical_balance(labels, sign_residuals(fit));
    REQUIRE(table.size() == 2);
    for (const auto& lv : table) {
        CHECK(lv.expected == doctest::Approx(0.75));
        CHECK(lv.share_above == doctest::Approx(0.75).epsilon(0.12));
        CHECK(lv.p_value > 0.01);
    }
}

TEST_CASE("categorical balance: degenerate all-above level") {
    const double q = 0.25;
    SignResiduals sr;
    sr.q = q;
    sr.c.resize(20);
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < 20; ++i) {
        labels.push_back(i < 8 ? "deg" : "ok");
        if (i < 8 || i % 2 == 0) sr.above.push_back(i);
        else sr.below.push_back(i);
    }
    const auto table = categorical_balance(labels, sr);
    const auto& deg = table[0].label == "deg" ? table[0] : table[1];
    CHECK(deg.share_above == 1.0);
    // doubling convention: p = min(1, 2 * P(X >= count)) with X ~ Bin(count, 1-q)
    CHECK(deg.p_value == doctest::Approx(std::min(1.0, 2.0 * std::pow(0.75, 8.0))).epsilon(1e-9));
}

TEST_CASE("categorical balance at the median expects one half") {
    SignResiduals sr;
    sr.q = 0.5;
    sr.c.resize(12);
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < 12; ++i) {
        labels.push_back(i % 2 ? "a" : "b");
        (i % 4 < 2 ? sr.above : sr.below).push_back(i);
    }
    const auto table = categorical_balance(labels, sr);
    for (const auto& lv : table) CHECK(lv.expected == doctest::Approx(0.5));
}

TEST_CASE("categorical balance rejects sparse levels") {
    SignResiduals sr;
    sr.q = 0.5;
    sr.c.resize(7);
    std::vector<std::string> labels{"a", "a", "a", "a", "a", "b", "b"};
    CHECK_THROWS_AS(categorical_balance(labels, sr), SparseLevel);
}
