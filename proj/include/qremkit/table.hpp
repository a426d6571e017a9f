#pragma once

#include "qremkit/common.hpp"

#include <string>
#include <vector>

namespace qremkit {

/// Column-labeled table; columns are numeric or categorical (strings).
struct DataTable {
    struct Column {
        std::string label;
        bool numeric = true;
        Vector values;                   // when numeric
        std::vector<std::string> cells;  // raw text (always kept)
    };

    std::vector<Column> columns;
    std::size_t rows = 0;

    const Column& column(const std::string& label) const;
    bool has(const std::string& label) const;
};

/// RFC-4180-style CSV with a header row: quoted fields, embedded commas and
/// doubled quotes supported. Empty cells raise MissingValue with loci.
DataTable load_csv(const std::string& path);
DataTable parse_csv(const std::string& text, const std::string& origin = "<string>");

}  // namespace qremkit
