#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

namespace robkit::jsonl {

using json = nlohmann::json;

// Reads a .jsonl file; throws robkit::Error with file/line context on failure.
std::vector<json> read_file(const std::filesystem::path& path);

// Streaming variant for large files.
void for_each(const std::filesystem::path& path, const std::function<void(const json&, std::size_t line)>& fn);

// Writes one compact JSON object per line. Deterministic: nlohmann::json
// serializes object keys in sorted order.
void write_file(const std::filesystem::path& path, const std::vector<json>& rows);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& content);

}  // namespace robkit::jsonl
