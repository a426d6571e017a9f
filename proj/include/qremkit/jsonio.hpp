#pragma once

#include <json.hpp>

#include <string>

namespace qremkit {

/// Canonical JSON serialization: keys in sorted order (nlohmann's default
/// object ordering), floats printed at 17 significant digits so that a
/// parse/re-emit round trip is byte-identical.
std::string emit_canonical(const nlohmann::json& j, int indent = 2);

void write_json(const nlohmann::json& j, const std::string& path);

}  // namespace qremkit
