#pragma once

#include <string>
#include <string_view>

#include <json.hpp>

namespace rwd {

using json = nlohmann::json;

std::string base64_encode(std::string_view bytes);
// Throws Error(MalformedRecord) on invalid input.
std::string base64_decode(std::string_view text);

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);

// Sorted keys, no whitespace. nlohmann::json keeps object keys in a
// std::map, so dump() is already canonical; this is the single place we
// rely on that.
inline std::string canonical_dump(const json& value) { return value.dump(); }

std::string read_file(const std::string& path);
// Writes through a temporary sibling and renames over the target.
void write_file_atomic(const std::string& path, std::string_view bytes);

}  // namespace rwd
