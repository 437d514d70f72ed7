#include "robkit/reviews.hpp"

#include "robkit/error.hpp"
#include "robkit/jsonl.hpp"

#include <algorithm>
#include <cctype>

namespace robkit::reviews {

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

bool contains(const std::string& haystack, const char* needle) {
    return haystack.find(needle) != std::string::npos;
}

std::string normalize_ws(const std::string& s) {
    std::string out;
    bool pending = false;
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            pending = !out.empty();
        } else {
            if (pending) out.push_back(' ');
            pending = false;
            out.push_back(c);
        }
    }
    return out;
}

}  // namespace

BiasType map_domain_label(const std::string& raw_domain_label) {
    const std::string v = lower(raw_domain_label);
    // First matching rule wins; evaluation order matters.
    if (contains(v, "sequence") || contains(v, "randomi") || contains(v, "allocation"))
        return BiasType::Selection;
    if (contains(v, "blinding of participants") || contains(v, "personnel") ||
        contains(v, "performance"))
        return BiasType::Performance;
    if (contains(v, "outcome assess") || contains(v, "detection")) return BiasType::Detection;
    if (contains(v, "incomplete outcome") || contains(v, "attrition")) return BiasType::Attrition;
    if (contains(v, "selective reporting") || contains(v, "reporting")) return BiasType::Reporting;
    return BiasType::Other;
}

ParseResult parse_review_table(const json& doc) {
    ParseResult result;
    if (!doc.is_object() || !doc.contains("review_id") || !doc["review_id"].is_string())
        throw validation_error("review document: missing or non-string field 'review_id'");
    const std::string review_id = doc["review_id"].get<std::string>();
    if (!doc.contains("studies") || !doc["studies"].is_array())
        throw validation_error("review " + review_id + ": missing or non-array field 'studies'");

    std::size_t study_index = 0;
    for (const auto& study : doc["studies"]) {
        const std::string where = "review " + review_id + ", study #" + std::to_string(study_index);
        if (!study.is_object() || !study.contains("study_id") || !study["study_id"].is_string())
            throw validation_error(where + ": missing or non-string field 'study_id'");
        const std::string study_id = study["study_id"].get<std::string>();
        std::optional<std::string> pubmed_id;
        if (study.contains("pubmed_id") && !study["pubmed_id"].is_null()) {
            if (!study["pubmed_id"].is_string())
                throw validation_error(where + ": field 'pubmed_id' must be a string");
            pubmed_id = study["pubmed_id"].get<std::string>();
        }
        if (!study.contains("rows") || !study["rows"].is_array())
            throw validation_error(where + ": missing or non-array field 'rows'");

        std::size_t row_index = 0;
        for (const auto& row : study["rows"]) {
            const std::string row_where = where + ", row #" + std::to_string(row_index);
            if (!row.is_object() || !row.contains("domain") || !row["domain"].is_string())
                throw validation_error(row_where + ": missing or non-string field 'domain'");
            if (row.contains("judgement") && !row["judgement"].is_string() && !row["judgement"].is_null())
                throw validation_error(row_where + ": field 'judgement' must be a string");
            if (row.contains("support") && !row["support"].is_string() && !row["support"].is_null())
                throw validation_error(row_where + ": field 'support' must be a string");

            const std::string domain = row["domain"].get<std::string>();
            const std::string judgement_raw =
                row.contains("judgement") && row["judgement"].is_string()
                    ? row["judgement"].get<std::string>()
                    : "";
            const std::string support =
                row.contains("support") && row["support"].is_string()
                    ? normalize_ws(row["support"].get<std::string>())
                    : "";

            auto reject = [&](const char* reason) {
                RejectedRow r;
                r.review_id = review_id;
                r.study_id = study_id;
                r.row_index = row_index;
                r.raw_domain_label = domain;
                r.reason = reason;
                result.rejects.push_back(std::move(r));
            };

            if (support.empty()) {
                reject("empty-support");
            } else if (judgement_raw.empty()) {
                reject("empty-judgement");
            } else {
                const std::string jl = lower(judgement_raw);
                if (jl != "low" && jl != "high" && jl != "unclear") {
                    reject("bad-judgement");
                } else {
                    SupportRecord rec;
                    rec.review_id = review_id;
                    rec.study_id = study_id;
                    rec.pubmed_id = pubmed_id;
                    rec.bias_type = map_domain_label(domain);
                    rec.judgement = judgement_from_string(jl);
                    rec.support_text = support;
                    rec.raw_domain_label = domain;
                    result.records.push_back(std::move(rec));
                }
            }
            ++row_index;
        }
        ++study_index;
    }
    return result;
}

ParseResult parse_review_file(const std::filesystem::path& path) {
    const std::string raw = jsonl::read_text_file(path);
    json doc = json::parse(raw, nullptr, false);
    if (doc.is_discarded()) throw validation_error(path.string() + ": invalid JSON");
    try {
        return parse_review_table(doc);
    } catch (const Error& e) {
        throw Error(e.kind(), path.string() + ": " + e.what());
    }
}

ParseResult parse_review_directory(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir))
        throw missing_input("review directory not found: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".json")
            files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    ParseResult all;
    for (const auto& f : files) {
        ParseResult one = parse_review_file(f);
        std::move(one.records.begin(), one.records.end(), std::back_inserter(all.records));
        std::move(one.rejects.begin(), one.rejects.end(), std::back_inserter(all.rejects));
    }
    return all;
}

json to_json(const SupportRecord& record) {
    json j{{"review_id", record.review_id},
           {"study_id", record.study_id},
           {"bias_type", to_string(record.bias_type)},
           {"judgement", to_string(record.judgement)},
           {"support_text", record.support_text},
           {"raw_domain_label", record.raw_domain_label}};
    if (record.pubmed_id) j["pubmed_id"] = *record.pubmed_id;
    return j;
}

SupportRecord support_record_from_json(const json& j) {
    SupportRecord r;
    r.review_id = j.at("review_id").get<std::string>();
    r.study_id = j.at("study_id").get<std::string>();
    if (j.contains("pubmed_id") && j["pubmed_id"].is_string())
        r.pubmed_id = j["pubmed_id"].get<std::string>();
    r.bias_type = bias_type_from_string(j.at("bias_type").get<std::string>());
    r.judgement = judgement_from_string(j.at("judgement").get<std::string>());
    r.support_text = j.at("support_text").get<std::string>();
    r.raw_domain_label = j.value("raw_domain_label", "");
    return r;
}

json to_json(const RejectedRow& row) {
    return json{{"review_id", row.review_id},
                {"study_id", row.study_id},
                {"row_index", row.row_index},
                {"raw_domain_label", row.raw_domain_label},
                {"reason", row.reason}};
}

}  // namespace robkit::reviews
