// SPDX-License-Identifier: Apache-2.0
//
// Small file helpers shared by the dataset, checkpoint and CLI code.

#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

namespace icrlsm::io {

/// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);
/// Throws IoError naming `field` on malformed input.
double parse_double(std::string_view text, std::string_view field);

std::string read_file(const std::filesystem::path& path);
/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& doc);

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace icrlsm::io
