#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

namespace multimed {

using Json = nlohmann::ordered_json;

std::string read_file(const std::filesystem::path& path);

/// Write to a temporary file in the target directory, then rename over the
/// target, so readers never see a partial file.
void atomic_write(const std::filesystem::path& path, std::string_view content);

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);

/// JSON text with two-space indentation. Floating-point numbers carry 17
/// significant digits; NaN and infinities become null.
std::string dump_json(const Json& value);

}  // namespace multimed
