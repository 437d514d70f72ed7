#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>

namespace robkit {

using json = nlohmann::json;

// Bias domains of the Cochrane RoB tool. Closed enumeration.
enum class BiasType { Selection, Performance, Detection, Attrition, Reporting, Other };

constexpr int kNumBiasTypes = 6;

enum class Judgement { Low, High, Unclear };

// Binary class used for training/evaluation: Low vs High/Unclear merged.
enum class Label { Low, HighUnclear };

std::string to_string(BiasType t);
std::string to_string(Judgement j);
std::string to_string(Label l);
BiasType bias_type_from_string(const std::string& s);
Judgement judgement_from_string(const std::string& s);
Label label_from_string(const std::string& s);

// One ground-truth row from a systematic review's RoB table.
struct SupportRecord {
    std::string review_id;
    std::string study_id;
    std::optional<std::string> pubmed_id;
    BiasType bias_type = BiasType::Other;
    Judgement judgement = Judgement::Unclear;
    std::string support_text;
    std::string raw_domain_label;  // original table heading, kept verbatim
};

struct Provenance {
    std::string review_id;
    std::string study_id;
    std::string pubmed_id;
    int sentence_index = -1;
    double similarity = 0.0;
};

// One MRC + classification example.
struct Instance {
    std::string id;
    BiasType bias_type = BiasType::Other;
    std::string question;
    std::string context;
    std::string answer_text;
    std::size_t answer_start = 0;  // character (Unicode scalar) offset into context
    Label label = Label::HighUnclear;
    Provenance provenance;
};

json to_json(const Instance& inst);
Instance instance_from_json(const json& j);

}  // namespace robkit
