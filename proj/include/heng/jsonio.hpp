#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

namespace heng {

using Json = nlohmann::json;

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

/// Parse a JSON document, wrapping parse failures in ParseError with the path.
Json parse_json_file(const std::string& path);
Json parse_json_text(const std::string& text, const std::string& origin);

/// FNV-1a 64-bit over raw bytes, as a 16-char lowercase hex string.
std::string fnv1a64_hex(const std::string& bytes);

/// Shortest round-trip decimal form of a double (used for CSV so reruns are
/// byte-identical).
std::string format_double(double x);

/// Fetch a required key or throw ParseError naming it.
const Json& require_key(const Json& j, const std::string& key,
                        const std::string& context);

}  // namespace heng
