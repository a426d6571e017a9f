#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "qremkit/jsonio.hpp"
#include "qremkit/model.hpp"
#include "qremkit/numkit.hpp"
#include "qremkit/table.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace qremkit;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    static fs::path dir = [] {
        fs::path p = fs::temp_directory_path() / "qremkit_cli_test";
        fs::create_directories(p);
        return p;
    }();
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(QREMKIT_BIN) + " " + args + " >/dev/null 2>&1";
    return std::system(cmd.c_str());
}

}  // namespace

TEST_CASE("csv: numeric table parses with labels") {
    const DataTable t = parse_csv("a,b\n1,2\n3,4\n5,6\n");
    CHECK(t.rows == 3);
    REQUIRE(t.columns.size() == 2);
    CHECK(t.columns[0].label == "a");
    CHECK(t.columns[1].numeric);
    CHECK(t.column("b").values[2] == 6.0);
}

TEST_CASE("csv: header-only file raises EmptyData") {
    CHECK_THROWS_AS(parse_csv("a,b\n"), EmptyData);
    CHECK_THROWS_AS(parse_csv(""), EmptyData);
}

TEST_CASE("csv: missing cells and ragged rows are located") {
    CHECK_THROWS_AS(parse_csv("a,b\n1,\n"), MissingValue);
    CHECK_THROWS_AS(parse_csv("a,b\n1\n"), ParseError);
    CHECK_THROWS_WITH_AS(parse_csv("a,b\n1,\n", "f.csv"), doctest::Contains("f.csv:2"),
                         MissingValue);
}

TEST_CASE("csv: quoted fields with commas and doubled quotes") {
    const DataTable t = parse_csv("name,v\n\"x, y\",1\n\"say \"\"hi\"\"\",2\n");
    CHECK(t.columns[0].cells[0] == "x, y");
    CHECK(t.columns[0].cells[1] == "say \"hi\"");
    CHECK_FALSE(t.columns[0].numeric);
}

TEST_CASE("design: categorical column expands to reference-coded indicators") {
    const DataTable t = parse_csv("y,grp\n1,red\n2,green\n3,blue\n4,green\n5,red\n");
    const Design d = build_design(t, {ModelTerm::parse("grp")});
    REQUIRE(d.names.size() == 3);  // intercept + 2 indicators (blue is baseline)
    CHECK(d.names[1] == "grp=green");
    CHECK(d.names[2] == "grp=red");
    CHECK(d.X(0, 2) == 1.0);
    CHECK(d.X(1, 1) == 1.0);
    CHECK(d.X(2, 1) == 0.0);
    CHECK(d.X(2, 2) == 0.0);
}

TEST_CASE("design: transforms square, log2, interaction") {
    const DataTable t = parse_csv("y,u,v\n1,2,3\n2,4,5\n3,8,7\n");
    const Design d = build_design(t, {ModelTerm::parse("square(u)"),
                                      ModelTerm::parse("log2(u)"),
                                      ModelTerm::parse("interaction(u,v)")});
    CHECK(d.names[1] == "u^2");
    CHECK(d.X(1, 1) == 16.0);
    CHECK(d.X(2, 2) == 3.0);
    CHECK(d.X(0, 3) == 6.0);
}

TEST_CASE("q grid parsing: list and range forms") {
    const auto a = parse_q_grid("0.25,0.5,0.75");
    CHECK(a == std::vector<double>{0.25, 0.5, 0.75});
    const auto b = parse_q_grid("0.1:0.2:0.9");
    REQUIRE(b.size() == 5);
    CHECK(b.front() == doctest::Approx(0.1));
    CHECK(b.back() == doctest::Approx(0.9));
    CHECK_THROWS_AS(parse_q_grid("0.5,0.4"), InvalidParameter);
    CHECK_THROWS_AS(parse_q_grid("0,0.5"), InvalidParameter);
}

TEST_CASE("canonical json round trip is byte identical") {
    nlohmann::json j;
    j["schema"] = "qremkit/1";
    j["values"] = {1.0 / 3.0, 2.0, -1.2345678901234567e-7};
    j["nested"] = {{"b", true}, {"a", 17}};
    const std::string once = emit_canonical(j);
    const nlohmann::json back = nlohmann::json::parse(once);
    const std::string twice = emit_canonical(back);
    CHECK(once == twice);
}

TEST_CASE("cli: fit writes results and coefficient paths") {
    RngStream rng(91, 0);
    const fs::path dir = temp_dir();
    const fs::path csv = dir / "fit_data.csv";
    {
        std::ofstream out(csv);
        out << "y,x\n";
        for (int i = 0; i < 200; ++i) {
            const double x = rng.uniform(0.0, 1.0);
            out << (5.0 - x + rng.normal(0.0, 0.1)) << ',' << x << '\n';
        }
    }
    const fs::path out_dir = dir / "fit_out";
    REQUIRE(run_cli("fit --data " + csv.string() + " --response y --terms x" +
                    " --q 0.25,0.5,0.75 --out-dir " + out_dir.string()) == 0);

    const auto results = nlohmann::json::parse(slurp(out_dir / "results.json"));
    CHECK(results["schema"] == "qremkit/1");
    REQUIRE(results["results"].size() == 3);
    for (const auto& entry : results["results"]) {
        CHECK(entry["converged"].get<bool>());
        CHECK(entry["coefficients"].size() == 2);
    }
    // slope near -1 at the median
    CHECK(results["results"][1]["coefficients"][1]["estimate"].get<double>() ==
          doctest::Approx(-1.0).epsilon(0.15));

    // round trip: reload and re-emit byte-identically
    const std::string raw = slurp(out_dir / "results.json");
    CHECK(emit_canonical(nlohmann::json::parse(raw)) == raw);

    std::ifstream coef(out_dir / "coefficients.csv");
    std::string header;
    std::getline(coef, header);
    CHECK(header == "q,term,estimate,se_lo,se_hi");
    int rows = 0;
    std::string line;
    while (std::getline(coef, line)) ++rows;
    CHECK(rows == 6);
}

TEST_CASE("cli: missing column exits nonzero") {
    const fs::path dir = temp_dir();
    const fs::path csv = dir / "bad.csv";
    std::ofstream(csv) << "y,x\n1,2\n3,4\n";
    CHECK(run_cli("fit --data " + csv.string() + " --response z --terms x --out-dir " +
                  (dir / "bad_out").string()) != 0);
}

TEST_CASE("cli: diagnose emits flat qq and qq pairs tables") {
    RngStream rng(92, 0);
    const fs::path dir = temp_dir();
    const fs::path csv = dir / "diag_data.csv";
    {
        std::ofstream out(csv);
        out << "y,x\n";
        for (int i = 0; i < 1500; ++i) {
            const double x = rng.uniform(0.0, 1.0);
            out << (1.0 + 2.0 * x + rng.normal(0.0, 0.2)) << ',' << x << '\n';
        }
    }
    const fs::path out_dir = dir / "diag_out";
    REQUIRE(run_cli("diagnose --data " + csv.string() +
                    " --response y --terms x --q 0.25,0.5,0.75 --out-dir " +
                    out_dir.string()) == 0);
    const std::string flat = slurp(out_dir / "flatqq.csv");
    CHECK(flat.rfind("q,xi,ratio\n", 0) == 0);
    CHECK(flat.find("NA") != std::string::npos);  // min-x cell has an empty denominator
    const std::string qq = slurp(out_dir / "qqpairs.csv");
    CHECK(qq.rfind("q,prob,above_x,below_x\n", 0) == 0);
    const auto results = nlohmann::json::parse(slurp(out_dir / "results.json"));
    for (const auto& entry : results["results"]) CHECK(entry["ks_pass"].get<bool>());
}

TEST_CASE("cli: select finds the planted predictor") {
    RngStream rng(93, 0);
    const fs::path dir = temp_dir();
    const fs::path csv = dir / "sel_data.csv";
    {
        std::ofstream out(csv);
        out << "y";
        for (int j = 1; j <= 30; ++j) out << ",g" << j;
        out << '\n';
        for (int i = 0; i < 150; ++i) {
            std::vector<double> x(30);
            for (auto& v : x) v = rng.normal(0.0, 1.0);
            out << (2.0 + 3.0 * x[12] + rng.normal(0.0, 0.1));
            for (double v : x) out << ',' << v;
            out << '\n';
        }
    }
    const fs::path out_dir = dir / "sel_out";
    REQUIRE(run_cli("select --data " + csv.string() +
                    " --response y --q 0.5 --init one_at_a_time:5 --out-dir " +
                    out_dir.string()) == 0);
    const auto results = nlohmann::json::parse(slurp(out_dir / "results.json"));
    REQUIRE(results["results"].size() == 1);
    const auto& sel = results["results"][0]["selected"];
    REQUIRE(sel.size() == 1);
    CHECK(sel[0]["term"] == "g13");
    CHECK(sel[0]["posterior_nonnull"].get<double>() > 0.99);
}

TEST_CASE("cli: simulate runs a desk-scale scenario") {
    const fs::path dir = temp_dir();
    const fs::path out_dir = dir / "sim_out";
    REQUIRE(run_cli("simulate --scenario a3:2 --reps 5 --q 0.5 --method qrem --out-dir " +
                    out_dir.string()) == 0);
    const auto report = nlohmann::json::parse(slurp(out_dir / "report.json"));
    CHECK(report["scenario"] == "a3_2");
    CHECK(report["per_q"][0]["failures"].get<int>() == 0);
    CHECK(slurp(out_dir / "report.csv").rfind("scenario,q,kind,key,value\n", 0) == 0);
}

TEST_CASE("cli: graph mode writes edge list and dot file") {
    RngStream rng(94, 0);
    const fs::path dir = temp_dir();
    const fs::path csv = dir / "graph_data.csv";
    {
        std::ofstream out(csv);
        out << "a,b,c\n";
        for (int i = 0; i < 200; ++i) {
            const double a = rng.uniform(0.0, 1.0);
            const double b = rng.uniform(0.0, 1.0);
            const double cc = a + b + rng.normal(0.0, 0.05);
            out << a << ',' << b << ',' << cc << '\n';
        }
    }
    const fs::path out_dir = dir / "graph_out";
    REQUIRE(run_cli("select --graph --data " + csv.string() +
                    " --q 0.5 --init one_at_a_time:2 --jobs 2 --out-dir " +
                    out_dir.string()) == 0);
    const std::string edges = slurp(out_dir / "edges.csv");
    CHECK(edges.rfind("from,to,q,sign,strength\n", 0) == 0);
    CHECK(edges.find("c,a,") != std::string::npos);
    const std::string dot = slurp(out_dir / "graph.dot");
    CHECK(dot.find("digraph") != std::string::npos);
    CHECK(dot.find("\"c\" -> \"a\"") != std::string::npos);
}
