#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "robkit/corpus.hpp"
#include "robkit/tfidf_index.hpp"
#include "robkit/types.hpp"

namespace robkit::annotate {

// One of the seven fixed signaling questions. Selection has two subtypes;
// every other bias type has a single question.
struct SignalingQuestion {
    BiasType bias_type = BiasType::Other;
    std::string text;
    enum class Subtype { SequenceGeneration, AllocationConcealment, None };
    Subtype subtype = Subtype::None;
};

struct MatchResult {
    std::string pubmed_id;
    int sentence_index = -1;
    double similarity = 0.0;
};

struct AnnotationConfig {
    double threshold = 0.5;  // strict: matches must be strictly above
    int window = 3;          // sentences kept on each side of the match
};

struct AnnotationReject {
    std::string record_key;  // review/study/ordinal of the source record
    BiasType bias_type = BiasType::Other;
    std::string reason;      // "no-match" | "below-threshold" | "empty-support"
    double best_similarity = 0.0;
};

struct AnnotationStats {
    std::size_t records_in = 0;
    std::size_t instances_out = 0;
    std::size_t rejects_out = 0;
    // bias type -> {low count, high/unclear count}; shape of the class
    // distribution report.
    std::map<std::string, std::pair<std::size_t, std::size_t>> class_counts;
    std::map<std::string, std::size_t> reject_reasons;
};

struct AnnotationResult {
    std::vector<Instance> instances;  // sorted by id
    std::vector<AnnotationReject> rejects;
    AnnotationStats stats;
};

struct SplitManifest {
    std::uint64_t seed = 0;
    double test_fraction = 0.0;
    std::vector<std::string> train_ids;
    std::vector<std::string> test_ids;
    std::map<std::string, std::pair<std::size_t, std::size_t>> per_type;  // type -> {train, test}
    std::vector<std::string> warnings;
};

// Best-scoring sentence strictly above the threshold, or nullopt. When the
// record names a PubMed id the search is restricted to that article's rows;
// ties break toward the lowest (pubmed_id, sentence_index).
std::optional<MatchResult> match_support(const SupportRecord& record,
                                         const index::TfidfIndex& idx, double threshold = 0.5);

// Joins sentences [i-window, i+window] (clipped) with single spaces;
// answer_start is the character offset of sentence i inside that context.
std::pair<std::string, std::size_t> build_context(const corpus::Article& article,
                                                  std::size_t sentence_index, int window = 3);

// Selection rows mentioning concealment get the allocation-concealment
// question; other Selection rows the sequence-generation one; every other
// bias type has exactly one question.
SignalingQuestion assign_question(const SupportRecord& record);

const std::vector<SignalingQuestion>& signaling_questions();

Label label_instance(Judgement judgement);

// Per-bias-type seeded allocation; each type's test share stays within one
// instance of the global fraction. Types with a single instance go to train
// with a warning.
SplitManifest stratified_split(const std::vector<Instance>& instances, double test_fraction,
                               std::uint64_t seed);

// Full distant-supervision pass: match -> context -> question -> label.
// Deterministic: instances come out sorted by id and a rerun over identical
// inputs is byte-identical.
AnnotationResult run_annotation(const std::vector<SupportRecord>& records,
                                const std::vector<corpus::Article>& articles,
                                const index::TfidfIndex& idx, const AnnotationConfig& config);

void write_instances_jsonl(const std::filesystem::path& path, const std::vector<Instance>& instances);
std::vector<Instance> read_instances_jsonl(const std::filesystem::path& path);

// Reader for published RoB MRC datasets in SQuAD-flavored JSON/JSONL form
// (answers.text[0]/answers.answer_start[0], string or 0/1 labels). Rows that
// already use the canonical field names pass through unchanged.
std::vector<Instance> read_instances_adapter(const std::filesystem::path& path);

void write_rejects_jsonl(const std::filesystem::path& path,
                         const std::vector<AnnotationReject>& rejects);

json split_manifest_to_json(const SplitManifest& m);
SplitManifest split_manifest_from_json(const json& j);

}  // namespace robkit::annotate
