#include "qremkit/jsonio.hpp"

#include "qremkit/common.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace qremkit {

namespace {

void escape_string(const std::string& s, std::string& out) {
    out += '"';
    for (char ch : s) {
        switch (ch) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case '\t': out += "\\t"; break;
            default:
                if (static_cast<unsigned char>(ch) < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof buf, "\\u%04x", ch);
                    out += buf;
                } else {
                    out += ch;
                }
        }
    }
    out += '"';
}

void emit(const nlohmann::json& j, int indent, int depth, std::string& out) {
    const std::string pad(static_cast<std::size_t>(indent) * static_cast<std::size_t>(depth), ' ');
    const std::string pad1(static_cast<std::size_t>(indent) * static_cast<std::size_t>(depth + 1), ' ');
    switch (j.type()) {
        case nlohmann::json::value_t::object: {
            if (j.empty()) { out += "{}"; return; }
            out += "{\n";
            bool first = true;
            for (auto it = j.begin(); it != j.end(); ++it) {
                if (!first) out += ",\n";
                first = false;
                out += pad1;
                escape_string(it.key(), out);
                out += ": ";
                emit(it.value(), indent, depth + 1, out);
            }
            out += '\n';
            out += pad;
            out += '}';
            return;
        }
        case nlohmann::json::value_t::array: {
            if (j.empty()) { out += "[]"; return; }
            out += "[\n";
            bool first = true;
            for (const auto& v : j) {
                if (!first) out += ",\n";
                first = false;
                out += pad1;
                emit(v, indent, depth + 1, out);
            }
            out += '\n';
            out += pad;
            out += ']';
            return;
        }
        case nlohmann::json::value_t::string:
            escape_string(j.get<std::string>(), out);
            return;
        case nlohmann::json::value_t::boolean:
            out += j.get<bool>() ? "true" : "false";
            return;
        case nlohmann::json::value_t::number_integer:
            out += std::to_string(j.get<std::int64_t>());
            return;
        case nlohmann::json::value_t::number_unsigned:
            out += std::to_string(j.get<std::uint64_t>());
            return;
        case nlohmann::json::value_t::number_float: {
            const double v = j.get<double>();
            if (!std::isfinite(v)) {
                out += "null";
                return;
            }
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.17g", v);
            out += buf;
            return;
        }
        default:
            out += "null";
            return;
    }
}

}  // namespace

std::string emit_canonical(const nlohmann::json& j, int indent) {
    std::string out;
    emit(j, indent, 0, out);
    out += '\n';
    return out;
}

void write_json(const nlohmann::json& j, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path);
    out << emit_canonical(j);
}

}  // namespace qremkit
