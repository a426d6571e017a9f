// qremkit command line: quantile regression fits, mixed-effects fits,
// variable selection, diagnostics, and simulation reports.

#include <CLI11.hpp>

#include "qremkit/diagnostics.hpp"
#include "qremkit/jsonio.hpp"
#include "qremkit/mixed.hpp"
#include "qremkit/model.hpp"
#include "qremkit/numkit.hpp"
#include "qremkit/qrem.hpp"
#include "qremkit/select.hpp"
#include "qremkit/simlab.hpp"
#include "qremkit/table.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace qk = qremkit;
using nlohmann::json;

namespace {

struct CommonOpts {
    std::string data_path;
    std::string out_dir = "qremkit_out";
    std::string q_text = "0.5";
    double epsilon = 1e-8;
    std::size_t max_iter = 1000;
    double zero_guard = 1e-6;
    std::uint64_t seed = 20240601;
    int jobs = 1;
};

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void ensure_out_dir(const std::string& dir) {
    std::filesystem::create_directories(dir);
}

std::string out_path(const CommonOpts& c, const std::string& name) {
    return (std::filesystem::path(c.out_dir) / name).string();
}

qk::QremOptions qrem_opts(const CommonOpts& c) {
    qk::QremOptions o;
    o.epsilon = c.epsilon;
    o.max_iter = c.max_iter;
    o.zero_guard = c.zero_guard;
    return o;
}

std::vector<qk::ModelTerm> parse_terms(const std::string& text) {
    std::vector<qk::ModelTerm> terms;
    int depth = 0;
    std::string cur;
    for (char ch : text) {
        if (ch == '(') ++depth;
        if (ch == ')') --depth;
        if (ch == ',' && depth == 0) {
            if (!cur.empty()) terms.push_back(qk::ModelTerm::parse(cur));
            cur.clear();
        } else {
            cur += ch;
        }
    }
    if (!cur.empty()) terms.push_back(qk::ModelTerm::parse(cur));
    return terms;
}

void write_coefficients_csv(const std::string& path,
                            const std::vector<json>& rows) {
    std::ofstream out(path);
    if (!out) throw qk::Error("cannot open " + path);
    out << "q,term,estimate,se_lo,se_hi\n";
    for (const auto& r : rows) {
        out << fmt17(r.at("q").get<double>()) << ','
            << r.at("term").get<std::string>() << ','
            << fmt17(r.at("estimate").get<double>()) << ','
            << fmt17(r.at("se_lo").get<double>()) << ','
            << fmt17(r.at("se_hi").get<double>()) << '\n';
    }
}

json report_to_json(const qk::ReplicationReport& rep) {
    json out;
    out["scenario"] = rep.scenario_id;
    out["reps"] = rep.reps;
    json per_q = json::array();
    for (const auto& qm : rep.per_q) {
        json e;
        e["q"] = qm.q;
        e["failures"] = qm.failures;
        e["runtime_sec"] = qm.runtime_sec;
        auto vec = [](const qk::Vector& v) {
            json a = json::array();
            for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
            return a;
        };
        if (qm.mean_estimate.size() > 0) {
            e["mean_estimate"] = vec(qm.mean_estimate);
            e["empirical_sd"] = vec(qm.empirical_sd);
            e["mean_se"] = vec(qm.mean_se);
            if (qm.bias) e["bias"] = vec(*qm.bias);
            if (qm.coverage) e["coverage"] = vec(*qm.coverage);
        }
        if (!qm.tp_hist.empty()) {
            e["tp_hist"] = qm.tp_hist;
            e["fp_hist"] = qm.fp_hist;
        }
        per_q.push_back(std::move(e));
    }
    out["per_q"] = std::move(per_q);
    return out;
}

int run_fit(const CommonOpts& c, const std::string& response, const std::string& terms_text) {
    const qk::DataTable table = qk::load_csv(c.data_path);
    qk::ModelSpec spec;
    spec.response = response;
    spec.fixed_terms = parse_terms(terms_text);
    spec.q_grid = qk::parse_q_grid(c.q_text);
    spec.validate(table);

    const qk::Design design = qk::build_design(table, spec.fixed_terms);
    const qk::Vector y = qk::response_vector(table, response);

    json results = json::array();
    std::vector<json> coef_rows;
    bool all_ok = true;
    for (double q : spec.q_grid) {
        const qk::QuantileFit fit = qk::fit_qrem(design.X, y, qk::Quantile(q), qrem_opts(c));
        const qk::AsymptoticCov cov = qk::asymptotic_cov(fit, design.X);
        const qk::GoodnessOfFit gof = qk::goodness_of_fit(fit);
        all_ok = all_ok && fit.converged;
        json entry;
        entry["q"] = q;
        entry["converged"] = fit.converged;
        entry["iterations"] = fit.iterations;
        entry["G"] = gof.G;
        entry["aic"] = gof.aic;
        entry["mean_check"] = gof.mean_check;
        entry["f0"] = cov.f0;
        json coefs = json::array();
        const double zc = qk::normal_quantile(0.975);
        for (Eigen::Index j = 0; j < fit.beta.size(); ++j) {
            json row;
            row["q"] = q;
            row["term"] = design.names[static_cast<std::size_t>(j)];
            row["estimate"] = fit.beta[j];
            row["se"] = cov.se[j];
            row["se_lo"] = fit.beta[j] - zc * cov.se[j];
            row["se_hi"] = fit.beta[j] + zc * cov.se[j];
            coefs.push_back(row);
            coef_rows.push_back(row);
        }
        entry["coefficients"] = std::move(coefs);
        results.push_back(std::move(entry));
    }

    json out;
    out["schema"] = "qremkit/1";
    out["command"] = "fit";
    out["data"] = c.data_path;
    out["response"] = response;
    out["results"] = std::move(results);
    ensure_out_dir(c.out_dir);
    qk::write_json(out, out_path(c, "results.json"));
    write_coefficients_csv(out_path(c, "coefficients.csv"), coef_rows);
    if (!all_ok) std::cerr << "warning: some fits hit max_iter without converging\n";
    return 0;
}

int run_fit_mixed(const CommonOpts& c, const std::string& response,
                  const std::string& terms_text, const std::string& group,
                  std::size_t boot_reps) {
    const qk::DataTable table = qk::load_csv(c.data_path);
    qk::ModelSpec spec;
    spec.response = response;
    spec.fixed_terms = parse_terms(terms_text);
    spec.group = group;
    spec.q_grid = qk::parse_q_grid(c.q_text);
    spec.validate(table);

    const qk::Design design = qk::build_design(table, spec.fixed_terms);
    const qk::Vector y = qk::response_vector(table, response);
    const qk::MixedSpec mspec =
        qk::MixedSpec::from_groups(design.X, qk::group_ids(table, group));

    json results = json::array();
    std::vector<json> coef_rows;
    for (double q : spec.q_grid) {
        const qk::MixedFit fit = qk::fit_eqrem(mspec, y, qk::Quantile(q), qrem_opts(c));
        json entry;
        entry["q"] = q;
        entry["converged"] = fit.converged;
        entry["iterations"] = fit.iterations;
        entry["K_var"] = fit.K_var;
        entry["variance_collapsed"] = fit.variance_collapsed;
        const qk::GoodnessOfFit gof = qk::goodness_of_fit([&] {
            qk::QuantileFit qf;
            qf.q = q;
            qf.beta = fit.beta;
            qf.residuals = fit.residuals;
            return qf;
        }());
        entry["G"] = gof.G;
        entry["aic"] = gof.aic;

        qk::BootstrapCI ci;
        bool have_ci = false;
        if (boot_reps >= 50) {
            ci = qk::bootstrap_ci(mspec, y, qk::Quantile(q), boot_reps, 0.95,
                                  qk::RngStream(c.seed, 17), qrem_opts(c), c.jobs);
            have_ci = true;
            entry["bootstrap_reps_used"] = ci.successful;
        }
        json coefs = json::array();
        for (Eigen::Index j = 0; j < fit.beta.size(); ++j) {
            json row;
            row["q"] = q;
            row["term"] = design.names[static_cast<std::size_t>(j)];
            row["estimate"] = fit.beta[j];
            row["se_lo"] = have_ci ? ci.lower[j] : fit.beta[j];
            row["se_hi"] = have_ci ? ci.upper[j] : fit.beta[j];
            coefs.push_back(row);
            coef_rows.push_back(row);
        }
        entry["coefficients"] = std::move(coefs);
        results.push_back(std::move(entry));
    }

    json out;
    out["schema"] = "qremkit/1";
    out["command"] = "fit-mixed";
    out["data"] = c.data_path;
    out["response"] = response;
    out["group"] = group;
    out["results"] = std::move(results);
    ensure_out_dir(c.out_dir);
    qk::write_json(out, out_path(c, "results.json"));
    write_coefficients_csv(out_path(c, "coefficients.csv"), coef_rows);
    return 0;
}

qk::InitStrategy parse_init(const std::string& text) {
    if (text.rfind("one_at_a_time:", 0) == 0) {
        return qk::InitOneAtATime{std::stoul(text.substr(14))};
    }
    if (text.rfind("chunked:", 0) == 0) {
        const std::string rest = text.substr(8);
        const auto colon = rest.find(':');
        if (colon == std::string::npos) throw qk::InvalidStrategyParams("chunked:m:K expected");
        return qk::InitChunked{std::stoul(rest.substr(0, colon)), std::stoul(rest.substr(colon + 1))};
    }
    if (text.rfind("provided:", 0) == 0) {
        qk::InitProvided p;
        std::string rest = text.substr(9);
        std::size_t pos = 0;
        while (pos < rest.size()) {
            auto comma = rest.find(',', pos);
            if (comma == std::string::npos) comma = rest.size();
            p.set.push_back(std::stoul(rest.substr(pos, comma - pos)));
            pos = comma + 1;
        }
        return p;
    }
    throw qk::InvalidStrategyParams("unknown init strategy '" + text + "'");
}

int run_select(const CommonOpts& c, const std::string& response, double delta,
               const std::string& init_text, std::size_t restarts, bool graph_mode) {
    const qk::DataTable table = qk::load_csv(c.data_path);
    const std::vector<double> q_grid = qk::parse_q_grid(c.q_text);

    qk::SelectOptions sopts;
    sopts.delta = delta;
    sopts.init = parse_init(init_text);
    sopts.randomized_restarts = restarts;
    sopts.rng = qk::RngStream(c.seed, 23);
    sopts.qrem = qrem_opts(c);

    ensure_out_dir(c.out_dir);

    if (graph_mode) {
        std::vector<std::string> labels;
        std::vector<Eigen::Index> keep;
        for (std::size_t j = 0; j < table.columns.size(); ++j) {
            if (table.columns[j].numeric) {
                labels.push_back(table.columns[j].label);
                keep.push_back(static_cast<Eigen::Index>(j));
            }
        }
        qk::Matrix data(static_cast<Eigen::Index>(table.rows),
                        static_cast<Eigen::Index>(keep.size()));
        for (std::size_t j = 0; j < keep.size(); ++j) {
            data.col(static_cast<Eigen::Index>(j)) =
                table.columns[static_cast<std::size_t>(keep[j])].values;
        }
        const qk::QuantileGraph g = qk::neighborhood_graph(data, labels, q_grid, sopts, c.jobs);
        qk::write_edges_csv(g, out_path(c, "edges.csv"));
        qk::write_graph_dot(g, out_path(c, "graph.dot"));
        json out;
        out["schema"] = "qremkit/1";
        out["command"] = "select-graph";
        out["nodes"] = g.nodes;
        out["edge_count"] = g.edges.size();
        out["failures"] = g.failures;
        qk::write_json(out, out_path(c, "results.json"));
        return 0;
    }

    const qk::Vector y = qk::response_vector(table, response);
    std::vector<std::string> labels;
    std::vector<Eigen::Index> keep;
    for (std::size_t j = 0; j < table.columns.size(); ++j) {
        if (table.columns[j].numeric && table.columns[j].label != response) {
            labels.push_back(table.columns[j].label);
            keep.push_back(static_cast<Eigen::Index>(j));
        }
    }
    qk::Matrix X(static_cast<Eigen::Index>(table.rows), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t j = 0; j < keep.size(); ++j) {
        X.col(static_cast<Eigen::Index>(j)) = table.columns[static_cast<std::size_t>(keep[j])].values;
    }

    json results = json::array();
    for (double q : q_grid) {
        const qk::SelectResult res = qk::fit_select(y, X, qk::Quantile(q), sopts);
        json entry;
        entry["q"] = q;
        json sel = json::array();
        for (std::size_t j = 0; j < res.state.S.size(); ++j) {
            json one;
            one["term"] = labels[res.state.S[j]];
            one["estimate"] = res.fit.beta[static_cast<Eigen::Index>(j + 1)];
            const Eigen::Index col = static_cast<Eigen::Index>(res.state.S[j]);
            one["posterior_nonnull"] =
                res.state.gamma_post(col, 0) + res.state.gamma_post(col, 2);
            sel.push_back(std::move(one));
        }
        entry["selected"] = std::move(sel);
        entry["intercept"] = res.fit.beta[0];
        entry["loglik_trace"] = res.state.loglik_trace;
        json tsets = json::array();
        for (const auto& s : res.terminal_sets) {
            json ts = json::array();
            for (std::size_t k : s) ts.push_back(labels[k]);
            tsets.push_back(std::move(ts));
        }
        entry["terminal_sets"] = std::move(tsets);
        results.push_back(std::move(entry));
    }

    json out;
    out["schema"] = "qremkit/1";
    out["command"] = "select";
    out["data"] = c.data_path;
    out["response"] = response;
    out["results"] = std::move(results);
    qk::write_json(out, out_path(c, "results.json"));
    return 0;
}

int run_diagnose(const CommonOpts& c, const std::string& response,
                 const std::string& terms_text, const std::string& x_col_opt,
                 std::size_t L) {
    const qk::DataTable table = qk::load_csv(c.data_path);
    qk::ModelSpec spec;
    spec.response = response;
    spec.fixed_terms = parse_terms(terms_text);
    spec.q_grid = qk::parse_q_grid(c.q_text);
    spec.validate(table);

    const qk::Design design = qk::build_design(table, spec.fixed_terms);
    const qk::Vector y = qk::response_vector(table, response);

    std::string x_label = x_col_opt;
    if (x_label.empty()) {
        for (const auto& t : spec.fixed_terms) {
            if (table.column(t.a).numeric) {
                x_label = t.a;
                break;
            }
        }
    }
    if (x_label.empty()) throw qk::InvalidParameter("diagnose: no numeric predictor to diagnose");
    const qk::Vector x_col = table.column(x_label).values;

    std::vector<qk::QuantileFit> fits;
    json results = json::array();
    ensure_out_dir(c.out_dir);
    std::ofstream qq_out(out_path(c, "qqpairs.csv"));
    qq_out << "q,prob,above_x,below_x\n";
    for (double q : spec.q_grid) {
        fits.push_back(qk::fit_qrem(design.X, y, qk::Quantile(q), qrem_opts(c)));
        const qk::QuantileFit& fit = fits.back();
        const qk::GoodnessOfFit gof = qk::goodness_of_fit(fit);
        json entry;
        entry["q"] = q;
        entry["converged"] = fit.converged;
        entry["G"] = gof.G;
        entry["aic"] = gof.aic;
        try {
            const qk::QQPairs pairs = qk::qq_pairs(x_col, qk::sign_residuals(fit));
            entry["ks"] = pairs.ks;
            entry["ks_bound_1pct"] = pairs.ks_bound_1pct;
            entry["ks_pass"] = pairs.ks < pairs.ks_bound_1pct;
            for (Eigen::Index i = 0; i < pairs.probs.size(); ++i) {
                qq_out << fmt17(q) << ',' << fmt17(pairs.probs[i]) << ','
                       << fmt17(pairs.above_quantiles[i]) << ','
                       << fmt17(pairs.below_quantiles[i]) << '\n';
            }
        } catch (const qk::EmptySide&) {
            entry["ks"] = nullptr;
        }
        results.push_back(std::move(entry));
    }

    const qk::FlatQQ flat = qk::flat_qq(fits, x_col, L);
    std::ofstream flat_out(out_path(c, "flatqq.csv"));
    flat_out << "q,xi,ratio\n";
    for (Eigen::Index jq = 0; jq < flat.ratios.cols(); ++jq) {
        for (Eigen::Index jx = 0; jx < flat.ratios.rows(); ++jx) {
            flat_out << fmt17(flat.quantile_grid[static_cast<std::size_t>(jq)]) << ','
                     << fmt17(flat.xi_grid[jx]) << ',';
            if (flat.missing[static_cast<std::size_t>(jx)][static_cast<std::size_t>(jq)]) {
                flat_out << "NA\n";
            } else {
                flat_out << fmt17(flat.ratios(jx, jq)) << '\n';
            }
        }
    }

    json out;
    out["schema"] = "qremkit/1";
    out["command"] = "diagnose";
    out["data"] = c.data_path;
    out["response"] = response;
    out["x_col"] = x_label;
    out["results"] = std::move(results);
    qk::write_json(out, out_path(c, "results.json"));
    return 0;
}

int run_simulate(const CommonOpts& c, const std::string& scenario_text,
                 std::size_t reps, const std::string& method_text,
                 std::size_t boot_reps, std::size_t K) {
    qk::Scenario scenario;
    if (scenario_text.rfind("a3:", 0) == 0) {
        scenario = qk::Scenario::table_a3(std::stoi(scenario_text.substr(3)));
    } else if (scenario_text.rfind("a4:", 0) == 0) {
        scenario = qk::Scenario::table_a4(std::stoi(scenario_text.substr(3)));
    } else {
        scenario = qk::Scenario::load(scenario_text);
    }

    qk::RunOptions ropts;
    ropts.qrem = qrem_opts(c);
    ropts.boot_reps = boot_reps;
    ropts.jobs = c.jobs;
    ropts.select_K = K;
    if (method_text == "qrem") ropts.method = qk::FitMethod::Qrem;
    else if (method_text == "eqrem") ropts.method = qk::FitMethod::Eqrem;
    else if (method_text == "select") ropts.method = qk::FitMethod::Select;
    else throw qk::InvalidParameter("method must be qrem, eqrem or select");

    const std::vector<double> q_grid = qk::parse_q_grid(c.q_text);
    const qk::ReplicationReport rep =
        qk::run_replications(scenario, q_grid, reps, ropts, qk::RngStream(c.seed, 31));

    ensure_out_dir(c.out_dir);
    qk::write_report_csv(rep, out_path(c, "report.csv"));
    qk::write_json(report_to_json(rep), out_path(c, "report.json"));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"quantile regression by EM: fits, mixed models, selection, diagnostics"};
    app.require_subcommand(1);

    CommonOpts c;
    std::string response, terms_text, group, x_col;
    std::string init_text = "one_at_a_time:10";
    std::string scenario_text, method_text = "qrem";
    double delta = 2.0;
    std::size_t boot_reps = 200, restarts = 0, reps = 50, L = 20, K = 10;
    bool graph_mode = false;

    auto add_common = [&](CLI::App* sub, bool needs_data) {
        if (needs_data) {
            sub->add_option("--data", c.data_path, "input CSV")->required()
                ->envname("QREMKIT_DATA");
        }
        sub->add_option("--q", c.q_text, "quantiles: comma list or start:step:stop")
            ->envname("QREMKIT_Q");
        sub->add_option("--out-dir", c.out_dir, "output directory")->envname("QREMKIT_OUT_DIR");
        sub->add_option("--epsilon", c.epsilon, "EM convergence threshold per observation")
            ->envname("QREMKIT_EPSILON");
        sub->add_option("--max-iter", c.max_iter, "EM iteration cap")->envname("QREMKIT_MAX_ITER");
        sub->add_option("--zero-guard", c.zero_guard, "residual floor relative to scale(y)")
            ->envname("QREMKIT_ZERO_GUARD");
        sub->add_option("--seed", c.seed, "random seed")->envname("QREMKIT_SEED");
        sub->add_option("--jobs", c.jobs, "worker threads")->envname("QREMKIT_JOBS");
    };

    CLI::App* fit = app.add_subcommand("fit", "fixed-effects quantile regression over a q grid");
    add_common(fit, true);
    fit->add_option("--response", response, "response column")->required();
    fit->add_option("--terms", terms_text, "comma list: x, square(x), log2(x), interaction(a,b)")
        ->required();

    CLI::App* fitm = app.add_subcommand("fit-mixed", "random-intercept quantile regression");
    add_common(fitm, true);
    fitm->add_option("--response", response, "response column")->required();
    fitm->add_option("--terms", terms_text, "fixed terms")->required();
    fitm->add_option("--group", group, "grouping column (random intercept)")->required();
    fitm->add_option("--boot-reps", boot_reps, "bootstrap replicates (0 disables intervals)");

    CLI::App* sel = app.add_subcommand("select", "high-dimensional variable selection");
    add_common(sel, true);
    sel->add_option("--response", response, "response column");
    sel->add_option("--delta", delta, "move acceptance threshold")->envname("QREMKIT_DELTA");
    sel->add_option("--init", init_text, "one_at_a_time:K | chunked:m:K | provided:i,j,...")
        ->envname("QREMKIT_INIT");
    sel->add_option("--restarts", restarts, "randomized restarts");
    sel->add_flag("--graph", graph_mode, "neighborhood graph over all numeric columns");

    CLI::App* diag = app.add_subcommand("diagnose", "sign-residual Q-Q and flat Q-Q diagnostics");
    add_common(diag, true);
    diag->add_option("--response", response, "response column")->required();
    diag->add_option("--terms", terms_text, "fixed terms")->required();
    diag->add_option("--x-col", x_col, "predictor column to diagnose");
    diag->add_option("--L", L, "flat Q-Q cut points");

    CLI::App* sim = app.add_subcommand("simulate", "replication study on a scenario");
    add_common(sim, false);
    sim->add_option("--scenario", scenario_text, "a3:ROW, a4:ROW, or a scenario file")->required();
    sim->add_option("--reps", reps, "replicates");
    sim->add_option("--method", method_text, "qrem | eqrem | select");
    sim->add_option("--boot-reps", boot_reps, "bootstrap replicates for eqrem");
    sim->add_option("--select-K", K, "screening size for select");

    CLI11_PARSE(app, argc, argv);

    try {
        if (fit->parsed()) return run_fit(c, response, terms_text);
        if (fitm->parsed()) return run_fit_mixed(c, response, terms_text, group, boot_reps);
        if (sel->parsed()) {
            if (!graph_mode && response.empty()) {
                throw qk::InvalidParameter("select: --response required unless --graph");
            }
            return run_select(c, response, delta, init_text, restarts, graph_mode);
        }
        if (diag->parsed()) return run_diagnose(c, response, terms_text, x_col, L);
        if (sim->parsed()) return run_simulate(c, scenario_text, reps, method_text, boot_reps, K);
    } catch (const qk::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
