#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace forge {

std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);

/// Writes to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
void write_jsonl_atomic(const std::filesystem::path& path, const std::vector<nlohmann::json>& lines);

std::string read_text_file(const std::filesystem::path& path);

template <typename T>
std::optional<T> optional_field(const nlohmann::json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    return it->template get<T>();
}

} // namespace forge
