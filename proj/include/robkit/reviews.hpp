#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "robkit/types.hpp"

namespace robkit::reviews {

// A table row that could not become a SupportRecord, with a machine-readable
// reason. Rows are never silently dropped: records + rejects == rows in.
struct RejectedRow {
    std::string review_id;
    std::string study_id;
    std::size_t row_index = 0;
    std::string raw_domain_label;
    std::string reason;  // "empty-support" | "empty-judgement" | "bad-judgement"
};

struct ParseResult {
    std::vector<SupportRecord> records;
    std::vector<RejectedRow> rejects;
};

// Maps a RoB table heading onto a bias type with ordered, case-insensitive
// keyword rules; unmatched headings fall through to Other.
BiasType map_domain_label(const std::string& raw_domain_label);

// Parses one normalized review interchange document:
//   {review_id, studies:[{study_id, pubmed_id?, rows:[{domain, judgement, support}]}]}
// Throws a validation error naming the study/row index and field on schema
// violations; rows with empty judgement or support go to the rejects stream.
ParseResult parse_review_table(const json& doc);

ParseResult parse_review_file(const std::filesystem::path& path);

// Parses every .json review file under a directory (sorted for determinism).
ParseResult parse_review_directory(const std::filesystem::path& dir);

json to_json(const SupportRecord& record);
SupportRecord support_record_from_json(const json& j);
json to_json(const RejectedRow& row);

}  // namespace robkit::reviews
