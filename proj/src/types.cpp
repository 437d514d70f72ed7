#include "robkit/types.hpp"

#include "robkit/error.hpp"

#include <algorithm>
#include <cctype>

namespace robkit {

namespace {
std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}
}  // namespace

std::string to_string(BiasType t) {
    switch (t) {
        case BiasType::Selection: return "selection";
        case BiasType::Performance: return "performance";
        case BiasType::Detection: return "detection";
        case BiasType::Attrition: return "attrition";
        case BiasType::Reporting: return "reporting";
        case BiasType::Other: return "other";
    }
    return "other";
}

std::string to_string(Judgement j) {
    switch (j) {
        case Judgement::Low: return "low";
        case Judgement::High: return "high";
        case Judgement::Unclear: return "unclear";
    }
    return "unclear";
}

std::string to_string(Label l) { return l == Label::Low ? "low" : "high/unclear"; }

BiasType bias_type_from_string(const std::string& s) {
    const std::string v = lower(s);
    if (v == "selection") return BiasType::Selection;
    if (v == "performance") return BiasType::Performance;
    if (v == "detection") return BiasType::Detection;
    if (v == "attrition") return BiasType::Attrition;
    if (v == "reporting") return BiasType::Reporting;
    if (v == "other") return BiasType::Other;
    throw validation_error("unknown bias type: " + s);
}

Judgement judgement_from_string(const std::string& s) {
    const std::string v = lower(s);
    if (v == "low") return Judgement::Low;
    if (v == "high") return Judgement::High;
    if (v == "unclear") return Judgement::Unclear;
    throw validation_error("unknown judgement: " + s);
}

Label label_from_string(const std::string& s) {
    const std::string v = lower(s);
    if (v == "low") return Label::Low;
    if (v == "high/unclear" || v == "highunclear" || v == "high_unclear") return Label::HighUnclear;
    throw validation_error("unknown label: " + s);
}

json to_json(const Instance& inst) {
    return json{{"id", inst.id},
                {"bias_type", to_string(inst.bias_type)},
                {"question", inst.question},
                {"context", inst.context},
                {"answer_text", inst.answer_text},
                {"answer_start", inst.answer_start},
                {"label", to_string(inst.label)},
                {"provenance",
                 json{{"review_id", inst.provenance.review_id},
                      {"study_id", inst.provenance.study_id},
                      {"pubmed_id", inst.provenance.pubmed_id},
                      {"sentence_index", inst.provenance.sentence_index},
                      {"similarity", inst.provenance.similarity}}}};
}

Instance instance_from_json(const json& j) {
    Instance inst;
    inst.id = j.at("id").get<std::string>();
    inst.bias_type = bias_type_from_string(j.at("bias_type").get<std::string>());
    inst.question = j.at("question").get<std::string>();
    inst.context = j.at("context").get<std::string>();
    inst.answer_text = j.at("answer_text").get<std::string>();
    inst.answer_start = j.at("answer_start").get<std::size_t>();
    inst.label = label_from_string(j.at("label").get<std::string>());
    if (j.contains("provenance")) {
        const auto& p = j.at("provenance");
        inst.provenance.review_id = p.value("review_id", "");
        inst.provenance.study_id = p.value("study_id", "");
        inst.provenance.pubmed_id = p.value("pubmed_id", "");
        inst.provenance.sentence_index = p.value("sentence_index", -1);
        inst.provenance.similarity = p.value("similarity", 0.0);
    }
    return inst;
}

}  // namespace robkit
