#pragma once

#include "qremkit/table.hpp"

#include <string>
#include <vector>

namespace qremkit {

/// One fixed term: a column label with an optional transform.
struct ModelTerm {
    enum Transform { None, Square, Log2, Interaction };
    Transform transform = None;
    std::string a;
    std::string b;  // second column for interactions

    /// Parses "x", "square(x)", "log2(x)", "interaction(x,y)".
    static ModelTerm parse(const std::string& text);
    std::string name() const;
};

struct ModelSpec {
    std::string response;
    std::vector<ModelTerm> fixed_terms;
    std::string group;  // optional random-intercept column
    std::vector<double> q_grid;

    void validate(const DataTable& table) const;
};

/// Design matrix with a leading intercept column. Categorical columns expand
/// to reference-coded indicators (first level in lexicographic order is the
/// baseline). Returns the per-column term names alongside.
struct Design {
    Matrix X;
    std::vector<std::string> names;
};

Design build_design(const DataTable& table, const std::vector<ModelTerm>& terms);

Vector response_vector(const DataTable& table, const std::string& response);

/// Group ids (0-based, order of first appearance) for a grouping column.
std::vector<int> group_ids(const DataTable& table, const std::string& label);

/// "0.1:0.1:0.9" or "0.25,0.5,0.75" -> strictly increasing grid in (0,1).
std::vector<double> parse_q_grid(const std::string& text);

}  // namespace qremkit
