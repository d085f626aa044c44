#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "json.hpp"

namespace snowdet {

std::string read_file(const std::filesystem::path& path);

/// Writes to a temporary sibling and renames it into place, so readers never
/// observe a partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

nlohmann::json read_json(const std::filesystem::path& path);
void write_json_atomic(const std::filesystem::path& path, const nlohmann::json& doc);

/// Canonical text of a JSON document: sorted keys, no whitespace. Used for
/// hashing configs.
std::string canonical_json(const nlohmann::json& doc);

/// UTC timestamp in ISO-8601 form, e.g. 2024-01-31T12:00:00Z.
std::string utc_timestamp_now();

}  // namespace snowdet
