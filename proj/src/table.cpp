#include "qremkit/table.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

namespace qremkit {

const DataTable::Column& DataTable::column(const std::string& label) const {
    for (const auto& c : columns) {
        if (c.label == label) return c;
    }
    throw ParseError("no column named '" + label + "'");
}

bool DataTable::has(const std::string& label) const {
    for (const auto& c : columns) {
        if (c.label == label) return true;
    }
    return false;
}

namespace {

std::vector<std::string> split_csv_record(const std::string& line, std::size_t row,
                                          const std::string& origin) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += ch;
            }
        } else if (ch == '"') {
            if (!cur.empty()) {
                throw ParseError(origin + ":" + std::to_string(row) + ": stray quote");
            }
            quoted = true;
        } else if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    if (quoted) throw ParseError(origin + ":" + std::to_string(row) + ": unterminated quote");
    fields.push_back(cur);
    return fields;
}

bool parse_number(const std::string& s, double& out) {
    if (s.empty()) return false;
    std::size_t used = 0;
    try {
        out = std::stod(s, &used);
    } catch (...) {
        return false;
    }
    while (used < s.size() && std::isspace(static_cast<unsigned char>(s[used]))) ++used;
    return used == s.size();
}

}  // namespace

DataTable parse_csv(const std::string& text, const std::string& origin) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw EmptyData(origin + ": empty file");
    const std::vector<std::string> header = split_csv_record(line, 1, origin);
    if (header.empty()) throw EmptyData(origin + ": empty header");

    DataTable table;
    table.columns.resize(header.size());
    for (std::size_t j = 0; j < header.size(); ++j) table.columns[j].label = header[j];

    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line == "\r") continue;
        const auto fields = split_csv_record(line, row, origin);
        if (fields.size() != header.size()) {
            throw ParseError(origin + ":" + std::to_string(row) + ": expected " +
                             std::to_string(header.size()) + " fields, found " +
                             std::to_string(fields.size()));
        }
        for (std::size_t j = 0; j < fields.size(); ++j) {
            if (fields[j].empty()) {
                throw MissingValue(origin + ":" + std::to_string(row) + ": column '" +
                                   header[j] + "' is empty");
            }
            table.columns[j].cells.push_back(fields[j]);
        }
        ++table.rows;
    }
    if (table.rows == 0) throw EmptyData(origin + ": header without data rows");

    for (auto& col : table.columns) {
        col.numeric = true;
        col.values.resize(static_cast<Eigen::Index>(table.rows));
        for (std::size_t i = 0; i < table.rows; ++i) {
            double v;
            if (!parse_number(col.cells[i], v)) {
                col.numeric = false;
                col.values.resize(0);
                break;
            }
            col.values[static_cast<Eigen::Index>(i)] = v;
        }
    }
    return table;
}

DataTable load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_csv(ss.str(), path);
}

}  // namespace qremkit
