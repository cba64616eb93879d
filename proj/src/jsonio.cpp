#include "heng/jsonio.hpp"

#include <fstream>
#include <sstream>

#include "heng/errors.hpp"

namespace heng {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ParseError("cannot write file: " + path);
  out << content;
  if (!out) throw ParseError("write failed: " + path);
}

Json parse_json_file(const std::string& path) {
  return parse_json_text(read_file(path), path);
}

Json parse_json_text(const std::string& text, const std::string& origin) {
  try {
    return Json::parse(text);
  } catch (const Json::exception& e) {
    throw ParseError(origin + ": " + e.what());
  }
}

std::string fnv1a64_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char out[17];
  static const char* digits = "0123456789abcdef";
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[h & 0xf];
    h >>= 4;
  }
  out[16] = '\0';
  return std::string(out);
}

std::string format_double(double x) {
  // nlohmann emits the shortest representation that parses back bit-exactly.
  return Json(x).dump();
}

const Json& require_key(const Json& j, const std::string& key,
                        const std::string& context) {
  auto it = j.find(key);
  if (it == j.end())
    throw ParseError(context + ": missing required key \"" + key + "\"");
  return *it;
}

}  // namespace heng
