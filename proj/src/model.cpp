#include "qremkit/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace qremkit {

ModelTerm ModelTerm::parse(const std::string& text) {
    ModelTerm t;
    const auto open = text.find('(');
    if (open == std::string::npos) {
        t.a = text;
        return t;
    }
    const auto close = text.rfind(')');
    if (close == std::string::npos || close < open) {
        throw ParseError("bad term syntax: '" + text + "'");
    }
    const std::string fn = text.substr(0, open);
    const std::string args = text.substr(open + 1, close - open - 1);
    if (fn == "square") {
        t.transform = Square;
        t.a = args;
    } else if (fn == "log2") {
        t.transform = Log2;
        t.a = args;
    } else if (fn == "interaction") {
        const auto comma = args.find(',');
        if (comma == std::string::npos) throw ParseError("interaction needs two columns");
        t.transform = Interaction;
        t.a = args.substr(0, comma);
        t.b = args.substr(comma + 1);
    } else {
        throw ParseError("unknown transform '" + fn + "'");
    }
    return t;
}

std::string ModelTerm::name() const {
    switch (transform) {
        case None: return a;
        case Square: return a + "^2";
        case Log2: return "log2(" + a + ")";
        case Interaction: return a + ":" + b;
    }
    return a;
}

void ModelSpec::validate(const DataTable& table) const {
    if (!table.has(response)) throw ParseError("response column '" + response + "' not found");
    if (!table.column(response).numeric) throw ParseError("response must be numeric");
    for (const auto& t : fixed_terms) {
        if (!table.has(t.a)) throw ParseError("term column '" + t.a + "' not found");
        if (t.transform == ModelTerm::Interaction && !table.has(t.b)) {
            throw ParseError("term column '" + t.b + "' not found");
        }
        if (t.transform != ModelTerm::None && !table.column(t.a).numeric) {
            throw ParseError("transform on categorical column '" + t.a + "'");
        }
    }
    if (!group.empty() && !table.has(group)) {
        throw ParseError("group column '" + group + "' not found");
    }
    if (q_grid.empty()) throw InvalidParameter("empty quantile grid");
    for (std::size_t i = 0; i < q_grid.size(); ++i) {
        if (!(q_grid[i] > 0.0 && q_grid[i] < 1.0)) {
            throw InvalidParameter("quantile grid entries must lie in (0,1)");
        }
        if (i > 0 && !(q_grid[i] > q_grid[i - 1])) {
            throw InvalidParameter("quantile grid must be strictly increasing");
        }
    }
}

namespace {

void append_numeric(const DataTable::Column& col, ModelTerm::Transform tf,
                    const DataTable::Column* other, const std::string& name,
                    std::vector<Vector>& cols, std::vector<std::string>& names) {
    Vector v = col.values;
    switch (tf) {
        case ModelTerm::None:
            break;
        case ModelTerm::Square:
            v = v.array().square();
            break;
        case ModelTerm::Log2:
            for (Eigen::Index i = 0; i < v.size(); ++i) {
                if (!(v[i] > 0.0)) throw InvalidParameter("log2 of non-positive value in '" + name + "'");
                v[i] = std::log2(v[i]);
            }
            break;
        case ModelTerm::Interaction:
            v = v.array() * other->values.array();
            break;
    }
    cols.push_back(std::move(v));
    names.push_back(name);
}

void append_categorical(const DataTable::Column& col, std::vector<Vector>& cols,
                        std::vector<std::string>& names) {
    std::set<std::string> levels(col.cells.begin(), col.cells.end());
    if (levels.size() < 2) throw InvalidParameter("categorical column '" + col.label + "' has one level");
    auto it = levels.begin();
    ++it;  // first (lexicographic) level is the baseline
    for (; it != levels.end(); ++it) {
        Vector v(static_cast<Eigen::Index>(col.cells.size()));
        for (std::size_t i = 0; i < col.cells.size(); ++i) {
            v[static_cast<Eigen::Index>(i)] = col.cells[i] == *it ? 1.0 : 0.0;
        }
        cols.push_back(std::move(v));
        names.push_back(col.label + "=" + *it);
    }
}

}  // namespace

Design build_design(const DataTable& table, const std::vector<ModelTerm>& terms) {
    std::vector<Vector> cols;
    std::vector<std::string> names;
    for (const auto& t : terms) {
        const auto& col = table.column(t.a);
        if (t.transform == ModelTerm::None && !col.numeric) {
            append_categorical(col, cols, names);
            continue;
        }
        if (!col.numeric) throw InvalidParameter("transform on categorical column '" + t.a + "'");
        const DataTable::Column* other = nullptr;
        if (t.transform == ModelTerm::Interaction) {
            other = &table.column(t.b);
            if (!other->numeric) throw InvalidParameter("interaction with categorical column '" + t.b + "'");
        }
        append_numeric(col, t.transform, other, t.name(), cols, names);
    }

    Design d;
    d.X.resize(static_cast<Eigen::Index>(table.rows), static_cast<Eigen::Index>(cols.size() + 1));
    d.X.col(0).setOnes();
    d.names.push_back("(intercept)");
    for (std::size_t j = 0; j < cols.size(); ++j) {
        d.X.col(static_cast<Eigen::Index>(j + 1)) = cols[j];
        d.names.push_back(names[j]);
    }
    return d;
}

Vector response_vector(const DataTable& table, const std::string& response) {
    const auto& col = table.column(response);
    if (!col.numeric) throw InvalidParameter("response must be numeric");
    return col.values;
}

std::vector<int> group_ids(const DataTable& table, const std::string& label) {
    const auto& col = table.column(label);
    std::map<std::string, int> ids;
    std::vector<int> out;
    out.reserve(table.rows);
    for (const auto& cell : col.cells) {
        auto [it, inserted] = ids.emplace(cell, static_cast<int>(ids.size()));
        out.push_back(it->second);
    }
    return out;
}

std::vector<double> parse_q_grid(const std::string& text) {
    std::vector<double> grid;
    const auto ncolon = std::count(text.begin(), text.end(), ':');
    if (ncolon == 2) {
        const auto c1 = text.find(':');
        const auto c2 = text.find(':', c1 + 1);
        const double start = std::stod(text.substr(0, c1));
        const double step = std::stod(text.substr(c1 + 1, c2 - c1 - 1));
        const double stop = std::stod(text.substr(c2 + 1));
        if (!(step > 0.0)) throw InvalidParameter("q grid step must be positive");
        for (double q = start; q <= stop + 1e-12; q += step) grid.push_back(q);
    } else {
        std::size_t pos = 0;
        while (pos < text.size()) {
            auto comma = text.find(',', pos);
            if (comma == std::string::npos) comma = text.size();
            grid.push_back(std::stod(text.substr(pos, comma - pos)));
            pos = comma + 1;
        }
    }
    if (grid.empty()) throw InvalidParameter("empty quantile grid");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!(grid[i] > 0.0 && grid[i] < 1.0)) throw InvalidParameter("quantiles must lie in (0,1)");
        if (i > 0 && !(grid[i] > grid[i - 1])) throw InvalidParameter("quantile grid must increase");
    }
    return grid;
}

}  // namespace qremkit
