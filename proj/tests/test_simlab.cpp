#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "qremkit/simlab.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace qremkit;

TEST_CASE("scenario 1: intercept-only draw has the right mean") {
    const Scenario s = Scenario::table_a3(1);
    const GeneratedData d = generate(s, RngStream(81, 0));
    // 3 sigma/sqrt(n) = 0.024 absolute
    CHECK(std::abs(d.y.mean() - 3.0) < 0.024);
}

TEST_CASE("scenario 13: OLS on a draw recovers the coefficients") {
    const Scenario s = Scenario::table_a3(13);
    const GeneratedData d = generate(s, RngStream(82, 0));
    const Matrix D = scenario_design(s, d.X);
    const Vector beta = (D.transpose() * D).ldlt().solve(D.transpose() * d.y);
    Vector truth(6);
    truth << 1, -3, 2, 2, -1, -2;
    // sigma = 0.1, n = 1000: three standard errors is a loose 0.03 band
    CHECK((beta - truth).cwiseAbs().maxCoeff() < 0.03);
}

TEST_CASE("table a4 row 9: adjacent true columns correlate at 0.95") {
    Scenario s = Scenario::table_a4(9);
    s.n = 1000;
    const GeneratedData d = generate(s, RngStream(83, 0));
    double acc = 0.0;
    for (int j = 0; j + 1 < 20; ++j) {
        const Vector a = d.X.col(j).array() - d.X.col(j).mean();
        const Vector b = d.X.col(j + 1).array() - d.X.col(j + 1).mean();
        acc += a.dot(b) / std::sqrt(a.squaredNorm() * b.squaredNorm());
    }
    CHECK(acc / 19.0 == doctest::Approx(0.95).epsilon(0.02 / 0.95));
}

TEST_CASE("generation is bitwise reproducible") {
    const Scenario s = Scenario::table_a4(5);
    const GeneratedData d1 = generate(s, RngStream(84, 3));
    const GeneratedData d2 = generate(s, RngStream(84, 3));
    CHECK(d1.y == d2.y);
    CHECK(d1.X == d2.X);
}

TEST_CASE("scenario text format round trip") {
    const std::string text =
        "id = demo\n"
        "n = 500\n"
        "mean = 1 - 3*x1 + 2*x2\n"
        "error = normal\n"
        "scale = 0.1 + 0.5*x1\n"
        "x2 = uniform(-3,3)\n";
    const Scenario s = Scenario::parse(text);
    CHECK(s.id == "demo");
    CHECK(s.n == 500);
    CHECK(s.n_true == 2);
    CHECK(s.mean_terms.size() == 3);
    CHECK(s.predictor_laws[1].a == -3.0);
    const GeneratedData d = generate(s, RngStream(85, 0));
    CHECK(d.X.cols() == 2);
    CHECK(d.X.col(1).minCoeff() < -1.0);

    const std::string path = (std::filesystem::temp_directory_path() / "qk_scen.txt").string();
    std::ofstream(path) << text;
    const Scenario s2 = Scenario::load(path);
    CHECK(s2.n == s.n);
    std::filesystem::remove(path);
}

TEST_CASE("mixed scenario 25 generates a balanced panel") {
    const Scenario s = Scenario::table_a3(25);
    const GeneratedData d = generate(s, RngStream(86, 0));
    CHECK(d.G == 100);
    CHECK(d.y.size() == 400);
    CHECK(d.groups.size() == 400);
}

TEST_CASE("true quantile coefficients for heteroscedastic scenarios") {
    const Scenario s14 = Scenario::table_a3(14);  // sd = 0.1 + 0.2 x over U(0,1)
    const auto c = s14.true_design_coefs(0.9);
    REQUIRE(c.has_value());
    const double z = normal_quantile(0.9);
    CHECK((*c)[0] == doctest::Approx(3.0 + 0.1 * z).epsilon(1e-12));
    CHECK((*c)[1] == doctest::Approx(2.0 + 0.2 * z).epsilon(1e-12));

    const Scenario s23 = Scenario::table_a3(23);  // scale 0.2 + x crosses zero
    CHECK_FALSE(s23.true_design_coefs(0.9).has_value());
    CHECK(s23.true_design_coefs(0.5).has_value());  // median unaffected

    const Scenario s19 = Scenario::table_a3(19);  // lognormal intercept shift
    const auto c19 = s19.true_design_coefs(0.5);
    REQUIRE(c19.has_value());
    CHECK((*c19)[0] == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("support tracks variance predictors away from the median") {
    const Scenario s = Scenario::table_a4(1);  // mean 3, sd 0.1 + x1
    CHECK(s.support(0.5).empty());
    CHECK(s.support(0.1) == std::vector<std::size_t>{0});
}

TEST_CASE("symmetric errors: slopes agree at q and 1-q") {
    Scenario s = Scenario::table_a3(13);
    s.n = 400;
    RunOptions opts;
    opts.method = FitMethod::Qrem;
    opts.jobs = 2;
    const ReplicationReport rep =
        run_replications(s, {0.25, 0.75}, 40, opts, RngStream(87, 0));
    REQUIRE(rep.per_q.size() == 2);
    for (int coef = 1; coef <= 5; ++coef) {
        const double lo = rep.per_q[0].mean_estimate[coef];
        const double hi = rep.per_q[1].mean_estimate[coef];
        const double mc = 3.0 * rep.per_q[0].empirical_sd[coef] / std::sqrt(40.0);
        CHECK(std::abs(lo - hi) < std::max(mc, 0.01) * 2.0);
    }
}

TEST_CASE("heteroscedastic scenario 14 fans out across quantiles") {
    Scenario s = Scenario::table_a3(14);
    s.n = 800;
    RunOptions opts;
    opts.jobs = 2;
    const ReplicationReport rep =
        run_replications(s, {0.1, 0.9}, 20, opts, RngStream(88, 0));
    CHECK(rep.per_q[1].mean_estimate[1] > rep.per_q[0].mean_estimate[1]);
}

TEST_CASE("scenario 2 bias is tiny at the median") {
    const Scenario s = Scenario::table_a3(2);
    RunOptions opts;
    opts.jobs = 2;
    const ReplicationReport rep = run_replications(s, {0.5}, 50, opts, RngStream(89, 0));
    REQUIRE(rep.per_q[0].bias.has_value());
    CHECK(std::abs((*rep.per_q[0].bias)[1]) < 0.01);
    REQUIRE(rep.per_q[0].coverage.has_value());
    CHECK((*rep.per_q[0].coverage)[1] > 0.85);
}

TEST_CASE("report csv is written with one row per metric") {
    Scenario s = Scenario::table_a3(2);
    s.n = 200;
    RunOptions opts;
    opts.jobs = 2;
    const ReplicationReport rep = run_replications(s, {0.5}, 5, opts, RngStream(90, 0));
    const std::string path = (std::filesystem::temp_directory_path() / "qk_report.csv").string();
    write_report_csv(rep, path);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "scenario,q,kind,key,value");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows >= 10);
    std::filesystem::remove(path);
}

TEST_CASE("invalid scenarios are rejected") {
    CHECK_THROWS_AS(Scenario::table_a3(26), InvalidScenario);
    CHECK_THROWS_AS(Scenario::parse("n = 100\n"), ParseError);
    Scenario s = Scenario::table_a3(2);
    s.scale.terms.push_back({1.0, 4, 1});  // references a missing predictor
    CHECK_THROWS_AS(s.validate(), InvalidScenario);
}
