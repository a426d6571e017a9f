#include "qremkit/simlab.hpp"

#include "qremkit/numkit.hpp"
#include "qremkit/select.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace qremkit {

double ScaleExpr::eval(const Vector& xrow) const {
    double acc = c0;
    for (const auto& t : terms) {
        double xv = xrow[t.j];
        if (t.power == 3) xv = xv * xv * xv;
        acc += t.coef * xv;
    }
    return std::abs(acc);
}

void Scenario::validate() const {
    if (n < 2) throw InvalidScenario(id + ": n too small");
    if (n_true < 1 && !mean_terms.empty()) {
        for (const auto& t : mean_terms) {
            if (t.kind != MeanTerm::Intercept) throw InvalidScenario(id + ": terms but no predictors");
        }
    }
    if (predictor_laws.size() != n_true) throw InvalidScenario(id + ": predictor law count mismatch");
    const auto check_idx = [&](int j) {
        if (j < 0 || static_cast<std::size_t>(j) >= n_true) {
            throw InvalidScenario(id + ": term references missing predictor");
        }
    };
    for (const auto& t : mean_terms) {
        if (t.kind == MeanTerm::Linear || t.kind == MeanTerm::Square) check_idx(t.j1);
        if (t.kind == MeanTerm::Interaction) { check_idx(t.j1); check_idx(t.j2); }
    }
    for (const auto& t : scale.terms) check_idx(t.j);
    if (P != 0 && P < n_true) throw InvalidScenario(id + ": P smaller than true column count");
    if (random_effect && (random_effect->groups < 2 || random_effect->times < 1)) {
        throw InvalidScenario(id + ": bad random-effect block");
    }
}

// -------------------------------------------------------------------------
// Expression parsing for the declarative format
// -------------------------------------------------------------------------

namespace {

struct ParsedTerm {
    double coef = 1.0;
    std::vector<std::pair<int, int>> vars;  // (index, power)
};

int var_index(const std::string& tok) {
    if (tok.size() < 2 || tok[0] != 'x') throw ParseError("expected predictor like x1, got '" + tok + "'");
    const int idx = std::stoi(tok.substr(1));
    if (idx < 1) throw ParseError("predictor indices start at x1");
    return idx - 1;
}

std::vector<ParsedTerm> parse_terms(const std::string& expr) {
    std::vector<ParsedTerm> out;
    std::string cleaned;
    for (char ch : expr) {
        if (!std::isspace(static_cast<unsigned char>(ch))) cleaned += ch;
    }
    if (cleaned.empty()) throw ParseError("empty expression");

    std::size_t pos = 0;
    while (pos < cleaned.size()) {
        double sign = 1.0;
        while (pos < cleaned.size() && (cleaned[pos] == '+' || cleaned[pos] == '-')) {
            if (cleaned[pos] == '-') sign = -sign;
            ++pos;
        }
        std::size_t end = pos;
        while (end < cleaned.size() && cleaned[end] != '+' && cleaned[end] != '-') ++end;
        // keep exponent signs like 1e-3 attached
        while (end < cleaned.size() && end > pos &&
               (cleaned[end - 1] == 'e' || cleaned[end - 1] == 'E')) {
            ++end;
            while (end < cleaned.size() && cleaned[end] != '+' && cleaned[end] != '-') ++end;
        }
        const std::string chunk = cleaned.substr(pos, end - pos);
        pos = end;
        if (chunk.empty()) throw ParseError("dangling sign in expression '" + expr + "'");

        ParsedTerm term;
        term.coef = sign;
        std::stringstream ss(chunk);
        std::string factor;
        bool saw_number = false;
        while (std::getline(ss, factor, '*')) {
            if (factor.empty()) throw ParseError("empty factor in '" + chunk + "'");
            if (factor[0] == 'x') {
                int power = 1;
                const auto caret = factor.find('^');
                std::string name = factor;
                if (caret != std::string::npos) {
                    power = std::stoi(factor.substr(caret + 1));
                    name = factor.substr(0, caret);
                }
                term.vars.emplace_back(var_index(name), power);
            } else {
                std::size_t used = 0;
                const double val = std::stod(factor, &used);
                if (used != factor.size()) throw ParseError("bad numeric factor '" + factor + "'");
                term.coef *= val;
                saw_number = true;
            }
        }
        if (term.vars.empty() && !saw_number) throw ParseError("empty term in '" + expr + "'");
        out.push_back(std::move(term));
    }
    return out;
}

std::vector<MeanTerm> parse_mean(const std::string& expr, std::size_t& max_idx) {
    std::vector<MeanTerm> out;
    for (const auto& t : parse_terms(expr)) {
        MeanTerm mt;
        mt.coef = t.coef;
        if (t.vars.empty()) {
            mt.kind = MeanTerm::Intercept;
        } else if (t.vars.size() == 1 && t.vars[0].second == 1) {
            mt.kind = MeanTerm::Linear;
            mt.j1 = t.vars[0].first;
        } else if (t.vars.size() == 1 && t.vars[0].second == 2) {
            mt.kind = MeanTerm::Square;
            mt.j1 = t.vars[0].first;
        } else if (t.vars.size() == 2 && t.vars[0].second == 1 && t.vars[1].second == 1) {
            mt.kind = MeanTerm::Interaction;
            mt.j1 = t.vars[0].first;
            mt.j2 = t.vars[1].first;
        } else {
            throw ParseError("unsupported mean term in '" + expr + "'");
        }
        for (const auto& [j, p] : t.vars) max_idx = std::max(max_idx, static_cast<std::size_t>(j) + 1);
        out.push_back(mt);
    }
    return out;
}

ScaleExpr parse_scale(const std::string& expr, std::size_t& max_idx) {
    ScaleExpr out;
    out.c0 = 0.0;
    for (const auto& t : parse_terms(expr)) {
        if (t.vars.empty()) {
            out.c0 += t.coef;
        } else if (t.vars.size() == 1 && (t.vars[0].second == 1 || t.vars[0].second == 3)) {
            ScaleTerm st;
            st.coef = t.coef;
            st.j = t.vars[0].first;
            st.power = t.vars[0].second;
            max_idx = std::max(max_idx, static_cast<std::size_t>(st.j) + 1);
            out.terms.push_back(st);
        } else {
            throw ParseError("unsupported scale term in '" + expr + "'");
        }
    }
    return out;
}

}  // namespace

Scenario Scenario::parse(const std::string& text) {
    Scenario s;
    s.id = "custom";
    s.P = 0;
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string v) {
            const auto b = v.find_first_not_of(" \t\r");
            const auto e = v.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : v.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (!key.empty()) kv[key] = val;
    }
    if (!kv.count("mean")) throw ParseError("scenario: missing 'mean'");

    std::size_t max_idx = 0;
    s.mean_terms = parse_mean(kv["mean"], max_idx);
    if (kv.count("scale")) s.scale = parse_scale(kv["scale"], max_idx);
    else { s.scale.c0 = 1.0; }
    if (kv.count("id")) s.id = kv["id"];
    if (kv.count("n")) s.n = std::stoul(kv["n"]);
    if (kv.count("P")) s.P = std::stoul(kv["P"]);
    if (kv.count("error")) {
        if (kv["error"] == "normal") s.error_law = Normal;
        else if (kv["error"] == "lognormal") s.error_law = Lognormal;
        else throw ParseError("scenario: error must be normal or lognormal");
    }
    if (kv.count("noise_sd")) s.noise_sd = std::stod(kv["noise_sd"]);
    if (kv.count("ar1_rho")) s.ar1_rho = std::stod(kv["ar1_rho"]);
    if (kv.count("n_true")) max_idx = std::max(max_idx, std::stoul(kv["n_true"]));
    s.n_true = std::max<std::size_t>(max_idx, 1);

    s.predictor_laws.assign(s.n_true, UniformDist{0.0, 1.0});
    for (std::size_t j = 0; j < s.n_true; ++j) {
        const std::string key = "x" + std::to_string(j + 1);
        if (!kv.count(key)) continue;
        const std::string& law = kv[key];
        const auto open = law.find('(');
        const auto comma = law.find(',');
        const auto close = law.find(')');
        if (law.substr(0, open) != "uniform" || comma == std::string::npos || close == std::string::npos) {
            throw ParseError("scenario: predictor law must be uniform(a,b)");
        }
        s.predictor_laws[j] = UniformDist{std::stod(law.substr(open + 1, comma - open - 1)),
                                          std::stod(law.substr(comma + 1, close - comma - 1))};
    }
    if (kv.count("re_sd") || kv.count("re_groups") || kv.count("re_times")) {
        RandomEffectSpec re;
        if (kv.count("re_sd")) re.sd = std::stod(kv["re_sd"]);
        if (kv.count("re_groups")) re.groups = std::stoi(kv["re_groups"]);
        if (kv.count("re_times")) re.times = std::stoi(kv["re_times"]);
        if (kv.count("re_time_scale")) re.time_scale = std::stod(kv["re_time_scale"]);
        if (kv.count("re_time_sd")) re.time_sd = std::stod(kv["re_time_sd"]);
        s.random_effect = re;
        s.n = static_cast<std::size_t>(re.groups) * static_cast<std::size_t>(re.times);
    }
    s.validate();
    return s;
}

Scenario Scenario::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open scenario file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

namespace {

Scenario build(const std::string& id, std::size_t n, const std::string& mean,
               Scenario::ErrorLaw law, const std::string& scale,
               std::vector<UniformDist> laws) {
    Scenario s;
    s.id = id;
    s.n = n;
    s.error_law = law;
    std::size_t max_idx = 0;
    s.mean_terms = parse_mean(mean, max_idx);
    s.scale = parse_scale(scale, max_idx);
    s.n_true = std::max<std::size_t>({max_idx, laws.size(), 1});
    if (laws.empty()) laws.assign(s.n_true, UniformDist{0.0, 1.0});
    if (laws.size() == 1 && s.n_true > 1) laws.assign(s.n_true, laws[0]);
    s.predictor_laws = std::move(laws);
    s.P = 0;
    return s;
}

}  // namespace

Scenario Scenario::table_a3(int row) {
    const UniformDist u01{0.0, 1.0};
    const UniformDist u11{-1.0, 1.0};
    Scenario s;
    if (row == 1) {
        s = build("a3_1", 1000, "3", Normal, "0.25", {u01});
    } else if (row >= 2 && row <= 11) {
        const double sigma = 0.1 * (row - 1);
        char buf[32];
        std::snprintf(buf, sizeof buf, "%g", sigma);
        s = build("a3_" + std::to_string(row), 1000, "5 - 1*x1", Normal, buf, {u01});
    } else if (row == 12) {
        s = build("a3_12", 1000, "1 - 3*x1 + 2*x2", Normal, "0.1",
                  {u01, UniformDist{-3.0, 3.0}});
    } else if (row == 13) {
        s = build("a3_13", 1000, "1 - 3*x1 + 2*x2 + 2*x3 - 1*x4 - 2*x5", Normal, "0.1",
                  {u11, u11, u11, u11, u11});
    } else if (row == 14) {
        s = build("a3_14", 1000, "3 + 2*x1", Normal, "0.1 + 0.2*x1", {u01});
    } else if (row == 15) {
        s = build("a3_15", 1000, "5 + 1*x1", Normal, "0.1 + 0.5*x1", {u01});
    } else if (row == 16) {
        s = build("a3_16", 1000, "3 + 0.5*x1", Normal, "0.5 + 0.7*x1", {u01});
    } else if (row == 17) {
        s = build("a3_17", 1000, "1 - 2*x1", Normal, "0.1 + 0.2*x1^3", {u01});
    } else if (row == 18) {
        s = build("a3_18", 1000, "7 + 3*x1", Normal, "1 - 0.5*x1", {u11});
    } else if (row == 19) {
        s = build("a3_19", 1000, "5", Lognormal, "0.75", {u11});
    } else if (row == 20) {
        s = build("a3_20", 1000, "3 - 1*x1", Lognormal, "0.75", {u11});
    } else if (row == 21) {
        s = build("a3_21", 1000, "1 - 3*x1 + 2*x2 + 2*x3 - 1*x4 - 2*x5", Lognormal, "0.75",
                  {u11, u11, u11, u11, u11});
    } else if (row == 22) {
        s = build("a3_22", 1000, "2 - 2*x1", Lognormal, "0.5 + 0.5*x1", {u11});
    } else if (row == 23) {
        s = build("a3_23", 2000, "6*x1^2 + 1*x1 + 120", Normal, "0.2 + 1*x1",
                  {UniformDist{-5.0, 5.0}});
    } else if (row == 24) {
        s = build("a3_24", 10000, "4*x1*x2", Normal, "0.1 + 0.2*x1", {u01, u01});
    } else if (row == 25) {
        s = build("a3_25", 400, "2 + 1*x1", Normal, "0.1", {u01});
        RandomEffectSpec re;
        re.sd = 0.5;
        re.groups = 100;
        re.times = 4;
        s.random_effect = re;
    } else {
        throw InvalidScenario("table_a3: row outside 1..25");
    }
    s.validate();
    return s;
}

Scenario Scenario::table_a4(int row) {
    Scenario s;
    const std::string five = "1 - 3*x1 + 2*x2 + 2*x3 - 1*x4 - 2*x5";
    if (row == 1) s = build("a4_1", 200, "3", Normal, "0.1 + 1*x1", {UniformDist{0.0, 1.0}});
    else if (row == 2) s = build("a4_2", 200, "5 - 1*x1", Normal, "0.3", {});
    else if (row == 3) s = build("a4_3", 200, "5 - 1*x1", Normal, "0.1 + 1*x1", {});
    else if (row == 4) s = build("a4_4", 200, five, Normal, "0.1", {});
    else if (row == 5) s = build("a4_5", 200, five, Normal, "0.1 + 1*x1", {});
    else if (row == 6) s = build("a4_6", 200, five, Normal, "0.1 + 1*x1 + 1.3*x2", {});
    else if (row == 7) s = build("a4_7", 200, five, Lognormal, "0.75", {});
    else if (row == 8) s = build("a4_8", 200, "2 - 2*x1", Lognormal, "0.25 + 0.5*x1", {});
    else if (row == 9) {
        std::string mean = "1*x1";
        for (int j = 2; j <= 20; ++j) mean += " + 1*x" + std::to_string(j);
        s = build("a4_9", 100, mean, Normal, "0.1", {});
        s.ar1_rho = 0.95;
        s.P = 1000;
    } else {
        throw InvalidScenario("table_a4: row outside 1..9");
    }
    if (row >= 1 && row <= 8) s.P = 500;
    // scenario 1's variance predictor still counts as a generated column
    s.noise_sd = 0.1;
    s.validate();
    return s;
}

std::vector<std::size_t> Scenario::support(double q) const {
    std::vector<bool> in(n_true, false);
    for (const auto& t : mean_terms) {
        if (t.kind == MeanTerm::Linear || t.kind == MeanTerm::Square) in[t.j1] = true;
        if (t.kind == MeanTerm::Interaction) { in[t.j1] = true; in[t.j2] = true; }
    }
    const double zq = normal_quantile(q);
    if (std::abs(zq) > 1e-12) {
        for (const auto& t : scale.terms) in[t.j] = true;
    }
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < in.size(); ++j) {
        if (in[j]) out.push_back(j);
    }
    return out;
}

Matrix scenario_design(const Scenario& s, const Matrix& X) {
    std::size_t cols = 1;
    for (const auto& t : s.mean_terms) cols += (t.kind != MeanTerm::Intercept);
    Matrix D(X.rows(), static_cast<Eigen::Index>(cols));
    D.col(0).setOnes();
    Eigen::Index at = 1;
    for (const auto& t : s.mean_terms) {
        switch (t.kind) {
            case MeanTerm::Intercept: break;
            case MeanTerm::Linear: D.col(at++) = X.col(t.j1); break;
            case MeanTerm::Square: D.col(at++) = X.col(t.j1).array().square(); break;
            case MeanTerm::Interaction:
                D.col(at++) = X.col(t.j1).array() * X.col(t.j2).array();
                break;
        }
    }
    return D;
}

std::optional<Vector> Scenario::true_design_coefs(double q) const {
    std::size_t cols = 1;
    for (const auto& t : mean_terms) cols += (t.kind != MeanTerm::Intercept);
    Vector coefs = Vector::Zero(static_cast<Eigen::Index>(cols));
    Eigen::Index at = 1;
    std::map<int, Eigen::Index> linear_slot;
    for (const auto& t : mean_terms) {
        if (t.kind == MeanTerm::Intercept) {
            coefs[0] += t.coef;
        } else {
            if (t.kind == MeanTerm::Linear) linear_slot[t.j1] = at;
            coefs[at++] += t.coef;
        }
    }
    const double zq = normal_quantile(q);
    if (error_law == Normal) {
        if (std::abs(zq) < 1e-15) return coefs;
        if (scale.constant()) {
            coefs[0] += scale.c0 * zq;
            return coefs;
        }
        // affine scale over linear design columns, never crossing zero
        double lo = scale.c0, hi = scale.c0;
        for (const auto& t : scale.terms) {
            if (t.power != 1) return std::nullopt;
            if (!linear_slot.count(t.j)) return std::nullopt;
            const auto& law = predictor_laws[static_cast<std::size_t>(t.j)];
            const double e0 = t.coef * law.a, e1 = t.coef * law.b;
            lo += std::min(e0, e1);
            hi += std::max(e0, e1);
        }
        if (lo < 0.0 && hi > 0.0) return std::nullopt;
        const double sgn = lo >= 0.0 ? 1.0 : -1.0;
        coefs[0] += sgn * scale.c0 * zq;
        for (const auto& t : scale.terms) coefs[linear_slot[t.j]] += sgn * t.coef * zq;
        return coefs;
    }
    // lognormal: quantile of the error is exp(log_sd * z_q)
    if (!scale.constant()) {
        if (std::abs(zq) < 1e-15) {
            coefs[0] += 1.0;
            return coefs;
        }
        return std::nullopt;
    }
    coefs[0] += std::exp(scale.c0 * zq);
    return coefs;
}

GeneratedData generate(const Scenario& s, RngStream rng) {
    s.validate();
    GeneratedData out;

    std::size_t n = s.n;
    if (s.random_effect) {
        n = static_cast<std::size_t>(s.random_effect->groups) *
            static_cast<std::size_t>(s.random_effect->times);
    }
    const std::size_t P_total = s.P == 0 ? s.n_true : s.P;
    out.X.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(P_total));

    if (s.random_effect) {
        const auto& re = *s.random_effect;
        out.G = re.groups;
        out.groups.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const int g = static_cast<int>(i) / re.times;
            const int t = static_cast<int>(i) % re.times + 1;
            out.groups[i] = g;
            out.X(static_cast<Eigen::Index>(i), 0) = rng.normal(re.time_scale * t, re.time_sd);
        }
    } else if (s.ar1_rho > 0.0) {
        // AR1 Gaussian copula over uniform marginals for the true block
        const double rho = s.ar1_rho;
        const double innov = std::sqrt(1.0 - rho * rho);
        for (std::size_t i = 0; i < n; ++i) {
            double z = 0.0;
            for (std::size_t j = 0; j < s.n_true; ++j) {
                z = (j == 0) ? rng.normal(0.0, 1.0) : rho * z + innov * rng.normal(0.0, 1.0);
                out.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = normal_cdf(z);
            }
        }
    } else {
        for (std::size_t j = 0; j < s.n_true; ++j) {
            for (std::size_t i = 0; i < n; ++i) {
                out.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                    rng.uniform(s.predictor_laws[j].a, s.predictor_laws[j].b);
            }
        }
    }
    for (std::size_t j = s.n_true; j < P_total; ++j) {
        for (std::size_t i = 0; i < n; ++i) {
            out.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                rng.normal(0.0, s.noise_sd);
        }
    }

    Vector re_draws;
    if (s.random_effect) {
        re_draws.resize(s.random_effect->groups);
        for (Eigen::Index g = 0; g < re_draws.size(); ++g) {
            re_draws[g] = rng.normal(0.0, s.random_effect->sd);
        }
    }

    out.y.resize(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = out.X.row(static_cast<Eigen::Index>(i));
        double mean = 0.0;
        for (const auto& t : s.mean_terms) {
            switch (t.kind) {
                case MeanTerm::Intercept: mean += t.coef; break;
                case MeanTerm::Linear: mean += t.coef * row[t.j1]; break;
                case MeanTerm::Square: mean += t.coef * row[t.j1] * row[t.j1]; break;
                case MeanTerm::Interaction: mean += t.coef * row[t.j1] * row[t.j2]; break;
            }
        }
        const Vector xrow = row.transpose().head(static_cast<Eigen::Index>(s.n_true));
        const double sd = s.scale.eval(xrow);
        double err;
        if (s.error_law == Scenario::Normal) {
            err = sd > 0.0 ? rng.normal(0.0, sd) : 0.0;
        } else {
            err = sd > 0.0 ? rng.lognormal(0.0, sd) : 1.0;
        }
        if (s.random_effect) mean += re_draws[out.groups[i]];
        out.y[static_cast<Eigen::Index>(i)] = mean + err;
    }
    return out;
}

// -------------------------------------------------------------------------
// Replication runner
// -------------------------------------------------------------------------

ReplicationReport run_replications(const Scenario& s, const std::vector<double>& q_grid,
                                   std::size_t reps, const RunOptions& opts, RngStream rng) {
    if (reps < 2) throw InvalidParameter("run_replications: need reps >= 2");
    s.validate();

    ReplicationReport report;
    report.scenario_id = s.id;
    report.reps = reps;

    struct RepOut {
        std::vector<Vector> est;               // per q
        std::vector<Vector> se;
        std::vector<std::pair<Vector, Vector>> ci;
        std::vector<std::pair<std::size_t, std::size_t>> tpfp;
        std::vector<char> ok;
        std::vector<double> secs;
    };
    std::vector<RepOut> outs(reps);

    parallel_for(reps, opts.jobs, [&](std::size_t rep) {
        RngStream sub = rng.substream(rep);
        RepOut& ro = outs[rep];
        ro.est.resize(q_grid.size());
        ro.se.resize(q_grid.size());
        ro.ci.resize(q_grid.size());
        ro.tpfp.resize(q_grid.size());
        ro.ok.assign(q_grid.size(), 0);
        ro.secs.assign(q_grid.size(), 0.0);
        GeneratedData data;
        try {
            data = generate(s, sub.substream(0));
        } catch (const Error&) {
            return;
        }
        for (std::size_t qi = 0; qi < q_grid.size(); ++qi) {
            const Quantile q(q_grid[qi]);
            const auto rep_t0 = std::chrono::steady_clock::now();
            try {
                if (opts.method == FitMethod::Select) {
                    SelectOptions so;
                    so.delta = opts.select_delta;
                    so.init = InitOneAtATime{opts.select_K};
                    so.qrem = opts.qrem;
                    const SelectResult res = fit_select(data.y, data.X, q, so);
                    const auto truth = s.support(q.value());
                    std::size_t tp = 0;
                    for (std::size_t k : res.state.S) {
                        tp += std::binary_search(truth.begin(), truth.end(), k);
                    }
                    ro.tpfp[qi] = {tp, res.state.S.size() - tp};
                    ro.ok[qi] = 1;
                } else if (opts.method == FitMethod::Eqrem) {
                    MixedSpec spec = MixedSpec::from_groups(scenario_design(s, data.X), data.groups);
                    const MixedFit f = fit_eqrem(spec, data.y, q, opts.qrem);
                    ro.est[qi] = f.beta;
                    if (opts.boot_reps >= 50) {
                        const BootstrapCI ci = bootstrap_ci(spec, data.y, q, opts.boot_reps,
                                                            opts.ci_level, sub.substream(qi + 1),
                                                            opts.qrem, 1);
                        ro.ci[qi] = {ci.lower, ci.upper};
                        const double zc = normal_quantile(0.5 + opts.ci_level / 2.0);
                        ro.se[qi] = (ci.upper - ci.lower) / (2.0 * zc);
                    } else {
                        ro.ci[qi] = {f.beta, f.beta};
                        ro.se[qi] = Vector::Zero(f.beta.size());
                    }
                    ro.ok[qi] = 1;
                } else {
                    const Matrix D = scenario_design(s, data.X);
                    const QuantileFit f = fit_qrem(D, data.y, q, opts.qrem);
                    const AsymptoticCov ac = asymptotic_cov(f, D);
                    ro.est[qi] = f.beta;
                    ro.se[qi] = ac.se;
                    const double zc = normal_quantile(0.5 + opts.ci_level / 2.0);
                    ro.ci[qi] = {f.beta - zc * ac.se, f.beta + zc * ac.se};
                    ro.ok[qi] = 1;
                }
            } catch (const Error&) {
                // tallied as a failure
            }
            ro.secs[qi] =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - rep_t0).count();
        }
    });

    for (std::size_t qi = 0; qi < q_grid.size(); ++qi) {
        QuantileMetrics qm;
        qm.q = q_grid[qi];
        for (std::size_t rep = 0; rep < reps; ++rep) qm.runtime_sec += outs[rep].secs[qi];

        std::size_t good = 0;
        for (std::size_t rep = 0; rep < reps; ++rep) {
            if (outs[rep].ok[qi]) ++good;
        }
        qm.failures = reps - good;

        if (opts.method == FitMethod::Select) {
            const auto truth = s.support(qm.q);
            qm.tp_hist.assign(truth.size() + 1, 0);
            std::size_t fp_max = 0;
            for (std::size_t rep = 0; rep < reps; ++rep) {
                if (outs[rep].ok[qi]) fp_max = std::max(fp_max, outs[rep].tpfp[qi].second);
            }
            qm.fp_hist.assign(fp_max + 1, 0);
            for (std::size_t rep = 0; rep < reps; ++rep) {
                if (!outs[rep].ok[qi]) continue;
                ++qm.tp_hist[std::min(outs[rep].tpfp[qi].first, truth.size())];
                ++qm.fp_hist[outs[rep].tpfp[qi].second];
            }
        } else if (good > 0) {
            Eigen::Index P = 0;
            for (std::size_t rep = 0; rep < reps; ++rep) {
                if (outs[rep].ok[qi]) { P = outs[rep].est[qi].size(); break; }
            }
            Vector mean = Vector::Zero(P), mean_se = Vector::Zero(P);
            for (std::size_t rep = 0; rep < reps; ++rep) {
                if (!outs[rep].ok[qi]) continue;
                mean += outs[rep].est[qi];
                mean_se += outs[rep].se[qi];
            }
            mean /= static_cast<double>(good);
            mean_se /= static_cast<double>(good);
            Vector var = Vector::Zero(P);
            for (std::size_t rep = 0; rep < reps; ++rep) {
                if (!outs[rep].ok[qi]) continue;
                var += (outs[rep].est[qi] - mean).array().square().matrix();
            }
            qm.mean_estimate = mean;
            qm.mean_se = mean_se;
            qm.empirical_sd = (var / std::max<double>(1.0, static_cast<double>(good - 1)))
                                  .cwiseSqrt();
            const auto truth = s.true_design_coefs(qm.q);
            if (truth && truth->size() == P) {
                qm.bias = mean - *truth;
                Vector cov = Vector::Zero(P);
                for (std::size_t rep = 0; rep < reps; ++rep) {
                    if (!outs[rep].ok[qi]) continue;
                    for (Eigen::Index j = 0; j < P; ++j) {
                        const bool inside = (*truth)[j] >= outs[rep].ci[qi].first[j] &&
                                            (*truth)[j] <= outs[rep].ci[qi].second[j];
                        cov[j] += inside;
                    }
                }
                qm.coverage = cov / static_cast<double>(good);
            }
        }
        report.per_q.push_back(std::move(qm));
    }
    return report;
}

void write_report_csv(const ReplicationReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open " + path);
    out << "scenario,q,kind,key,value\n";
    char qb[64], vb[64];
    auto row = [&](double q, const std::string& kind, const std::string& key, double value) {
        std::snprintf(qb, sizeof qb, "%.17g", q);
        std::snprintf(vb, sizeof vb, "%.17g", value);
        out << report.scenario_id << ',' << qb << ',' << kind << ',' << key << ',' << vb << '\n';
    };
    for (const auto& qm : report.per_q) {
        for (Eigen::Index j = 0; j < qm.mean_estimate.size(); ++j) {
            const std::string key = std::to_string(j);
            row(qm.q, "mean_estimate", key, qm.mean_estimate[j]);
            row(qm.q, "empirical_sd", key, qm.empirical_sd[j]);
            row(qm.q, "mean_se", key, qm.mean_se[j]);
            if (qm.bias) row(qm.q, "bias", key, (*qm.bias)[j]);
            if (qm.coverage) row(qm.q, "coverage", key, (*qm.coverage)[j]);
        }
        for (std::size_t k = 0; k < qm.tp_hist.size(); ++k) {
            row(qm.q, "tp_hist", std::to_string(k), static_cast<double>(qm.tp_hist[k]));
        }
        for (std::size_t k = 0; k < qm.fp_hist.size(); ++k) {
            row(qm.q, "fp_hist", std::to_string(k), static_cast<double>(qm.fp_hist[k]));
        }
        row(qm.q, "failures", "", static_cast<double>(qm.failures));
    }
}

}  // namespace qremkit
