#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace pilaw {

/// Lowercase hex SHA-256 of the given bytes.
std::string sha256_hex(std::string_view bytes);

/// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);

/// Strict parse of a complete decimal token; nullopt on any trailing junk.
std::optional<double> parse_double(std::string_view text);

std::string read_file(const std::filesystem::path& path);

/// Writes through a temporary sibling and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace pilaw
