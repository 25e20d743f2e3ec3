#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace abase {

/// Lowercase hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);

/// Streams the file; nullopt if it cannot be read.
std::optional<std::string> sha256_file(const std::filesystem::path& path);

}  // namespace abase
