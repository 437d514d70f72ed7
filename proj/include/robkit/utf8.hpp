#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

// Minimal UTF-8 helpers. All character offsets in this project are Unicode
// scalar-value offsets (code points), never bytes, so interchange files keep
// their meaning regardless of how consumers re-encode them.

namespace robkit::utf8 {

bool is_valid(std::string_view s);

// Number of code points; input must be valid UTF-8.
std::size_t length(std::string_view s);

// Decodes to code points. Invalid sequences map to U+FFFD (one per bad byte).
std::vector<char32_t> decode(std::string_view s);

std::string encode(const std::vector<char32_t>& cps);
void append(std::string& out, char32_t cp);

// Byte offset of the code point at index `cp_index` (s.size() when past end).
std::size_t byte_offset(std::string_view s, std::size_t cp_index);

// Substring by code-point range [start, end).
std::string substr(std::string_view s, std::size_t start, std::size_t end);

}  // namespace robkit::utf8
