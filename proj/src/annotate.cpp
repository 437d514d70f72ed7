#include "robkit/annotate.hpp"

#include "robkit/error.hpp"
#include "robkit/jsonl.hpp"
#include "robkit/rng.hpp"
#include "robkit/utf8.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <thread>

namespace robkit::annotate {

const std::vector<SignalingQuestion>& signaling_questions() {
    static const std::vector<SignalingQuestion> kQuestions = {
        {BiasType::Selection, "Was the allocation sequence random?",
         SignalingQuestion::Subtype::SequenceGeneration},
        {BiasType::Selection,
         "Was the allocation sequence concealed until participants were enrolled and assigned to "
         "interventions?",
         SignalingQuestion::Subtype::AllocationConcealment},
        {BiasType::Performance,
         "Were the trial participants, staff, and study personnel blind to the intervention?",
         SignalingQuestion::Subtype::None},
        {BiasType::Detection, "Was the outcome assessor blinded to the intervention?",
         SignalingQuestion::Subtype::None},
        {BiasType::Attrition, "Was the incomplete outcome data addressed?",
         SignalingQuestion::Subtype::None},
        {BiasType::Reporting, "Is the study free from selective reporting?",
         SignalingQuestion::Subtype::None},
        {BiasType::Other, "Is the study free from other types of bias?",
         SignalingQuestion::Subtype::None},
    };
    return kQuestions;
}

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

const SignalingQuestion& question_for(BiasType type, SignalingQuestion::Subtype subtype) {
    for (const auto& q : signaling_questions()) {
        if (q.bias_type != type) continue;
        if (type != BiasType::Selection || q.subtype == subtype) return q;
    }
    throw internal_error("no signaling question for bias type " + to_string(type));
}

}  // namespace

SignalingQuestion assign_question(const SupportRecord& record) {
    if (record.bias_type == BiasType::Selection) {
        const bool conceal = lower(record.raw_domain_label).find("conceal") != std::string::npos ||
                             lower(record.support_text).find("conceal") != std::string::npos;
        return question_for(BiasType::Selection,
                            conceal ? SignalingQuestion::Subtype::AllocationConcealment
                                    : SignalingQuestion::Subtype::SequenceGeneration);
    }
    return question_for(record.bias_type, SignalingQuestion::Subtype::None);
}

Label label_instance(Judgement judgement) {
    return judgement == Judgement::Low ? Label::Low : Label::HighUnclear;
}

std::optional<MatchResult> match_support(const SupportRecord& record,
                                         const index::TfidfIndex& idx, double threshold) {
    const auto hits = idx.query(record.support_text, 1, record.pubmed_id);
    if (hits.empty()) return std::nullopt;
    if (!(hits.front().similarity > threshold)) return std::nullopt;
    MatchResult m;
    m.pubmed_id = hits.front().meta.pubmed_id;
    m.sentence_index = hits.front().meta.sentence_index;
    m.similarity = hits.front().similarity;
    return m;
}

std::pair<std::string, std::size_t> build_context(const corpus::Article& article,
                                                  std::size_t sentence_index, int window) {
    if (sentence_index >= article.sentences.size())
        throw validation_error("build_context: sentence index " + std::to_string(sentence_index) +
                               " out of range for article " + article.pubmed_id);
    const std::size_t w = static_cast<std::size_t>(std::max(0, window));
    const std::size_t lo = sentence_index >= w ? sentence_index - w : 0;
    const std::size_t hi = std::min(article.sentences.size() - 1, sentence_index + w);

    std::string context;
    std::size_t answer_start = 0;
    for (std::size_t i = lo; i <= hi; ++i) {
        if (i > lo) context += ' ';
        if (i == sentence_index) answer_start = utf8::length(context);
        context += article.sentences[i].text;
    }
    return {context, answer_start};
}

AnnotationResult run_annotation(const std::vector<SupportRecord>& records,
                                const std::vector<corpus::Article>& articles,
                                const index::TfidfIndex& idx, const AnnotationConfig& config) {
    std::map<std::string, const corpus::Article*> by_pubmed;
    for (const auto& a : articles) by_pubmed[a.pubmed_id] = &a;

    struct Slot {
        std::optional<MatchResult> match;
        double best_similarity = 0.0;
        bool empty_support = false;
    };
    std::vector<Slot> slots(records.size());

    // Matching is read-only against the index; shard records across threads,
    // each writing its own slots.
    {
        unsigned hw = std::max(1u, std::thread::hardware_concurrency());
        hw = std::min<unsigned>(hw, 8);
        const std::size_t chunk = (records.size() + hw - 1) / hw;
        std::vector<std::thread> workers;
        for (unsigned t = 0; t < hw; ++t) {
            const std::size_t lo = t * chunk;
            const std::size_t hi = std::min(records.size(), lo + chunk);
            if (lo >= hi) break;
            workers.emplace_back([&, lo, hi] {
                for (std::size_t i = lo; i < hi; ++i) {
                    const auto& rec = records[i];
                    if (rec.support_text.empty()) {
                        slots[i].empty_support = true;
                        continue;
                    }
                    const auto hits = idx.query(rec.support_text, 1, rec.pubmed_id);
                    if (!hits.empty()) slots[i].best_similarity = hits.front().similarity;
                    slots[i].match = match_support(rec, idx, config.threshold);
                }
            });
        }
        for (auto& w : workers) w.join();
    }

    AnnotationResult result;
    result.stats.records_in = records.size();

    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& rec = records[i];
        char ordinal[16];
        std::snprintf(ordinal, sizeof(ordinal), "%05zu", i);
        const std::string key = rec.review_id + "/" + rec.study_id + "/" + ordinal;

        auto reject = [&](const char* reason, double best) {
            AnnotationReject r;
            r.record_key = key;
            r.bias_type = rec.bias_type;
            r.reason = reason;
            r.best_similarity = best;
            ++result.stats.reject_reasons[reason];
            result.rejects.push_back(std::move(r));
        };

        if (slots[i].empty_support) {
            reject("empty-support", 0.0);
            continue;
        }
        if (!slots[i].match) {
            if (slots[i].best_similarity > 0.0)
                reject("below-threshold", slots[i].best_similarity);
            else
                reject("no-match", 0.0);
            continue;
        }

        const MatchResult& m = *slots[i].match;
        auto art_it = by_pubmed.find(m.pubmed_id);
        if (art_it == by_pubmed.end())
            throw internal_error("annotation: matched article " + m.pubmed_id + " not loaded");
        const corpus::Article& article = *art_it->second;

        auto [context, answer_start] =
            build_context(article, static_cast<std::size_t>(m.sentence_index), config.window);

        Instance inst;
        inst.id = key;
        inst.bias_type = rec.bias_type;
        inst.question = assign_question(rec).text;
        inst.context = std::move(context);
        inst.answer_text = article.sentences[static_cast<std::size_t>(m.sentence_index)].text;
        inst.answer_start = answer_start;
        inst.label = label_instance(rec.judgement);
        inst.provenance.review_id = rec.review_id;
        inst.provenance.study_id = rec.study_id;
        inst.provenance.pubmed_id = m.pubmed_id;
        inst.provenance.sentence_index = m.sentence_index;
        inst.provenance.similarity = m.similarity;

        auto& counts = result.stats.class_counts[to_string(inst.bias_type)];
        if (inst.label == Label::Low)
            ++counts.first;
        else
            ++counts.second;
        result.instances.push_back(std::move(inst));
    }

    std::sort(result.instances.begin(), result.instances.end(),
              [](const Instance& a, const Instance& b) { return a.id < b.id; });
    std::sort(result.rejects.begin(), result.rejects.end(),
              [](const AnnotationReject& a, const AnnotationReject& b) {
                  return a.record_key < b.record_key;
              });
    result.stats.instances_out = result.instances.size();
    result.stats.rejects_out = result.rejects.size();
    return result;
}

SplitManifest stratified_split(const std::vector<Instance>& instances, double test_fraction,
                               std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw validation_error("stratified_split: test_fraction must be in (0, 1)");

    SplitManifest manifest;
    manifest.seed = seed;
    manifest.test_fraction = test_fraction;

    // Group ids by bias type; sort within group so the outcome depends only
    // on the id set, the fraction and the seed.
    std::map<std::string, std::vector<std::string>> groups;
    for (const auto& inst : instances) groups[to_string(inst.bias_type)].push_back(inst.id);

    Rng rng(seed);
    for (auto& [type, ids] : groups) {
        std::sort(ids.begin(), ids.end());
        rng.shuffle(ids);

        const std::size_t n = ids.size();
        std::size_t n_test = static_cast<std::size_t>(
            std::floor(static_cast<double>(n) * test_fraction + 0.5));
        if (n >= 2 && n_test >= n) n_test = n - 1;
        if (n == 1) {
            n_test = 0;
            manifest.warnings.push_back("bias type '" + type +
                                        "' has a single instance; assigned to train");
        }

        for (std::size_t i = 0; i < n; ++i) {
            if (i < n_test)
                manifest.test_ids.push_back(ids[i]);
            else
                manifest.train_ids.push_back(ids[i]);
        }
        manifest.per_type[type] = {n - n_test, n_test};
    }

    std::sort(manifest.train_ids.begin(), manifest.train_ids.end());
    std::sort(manifest.test_ids.begin(), manifest.test_ids.end());
    return manifest;
}

void write_instances_jsonl(const std::filesystem::path& path,
                           const std::vector<Instance>& instances) {
    std::vector<json> rows;
    rows.reserve(instances.size());
    for (const auto& inst : instances) rows.push_back(to_json(inst));
    jsonl::write_file(path, rows);
}

std::vector<Instance> read_instances_jsonl(const std::filesystem::path& path) {
    std::vector<Instance> out;
    jsonl::for_each(path, [&](const json& j, std::size_t) { out.push_back(instance_from_json(j)); });
    return out;
}

std::vector<Instance> read_instances_adapter(const std::filesystem::path& path) {
    std::vector<Instance> out;
    std::size_t auto_id = 0;
    auto map_row = [&](const json& j) {
        if (j.contains("answer_text") && j.contains("label")) {
            out.push_back(instance_from_json(j));
            return;
        }
        Instance inst;
        inst.id = j.contains("id")
                      ? (j["id"].is_string() ? j["id"].get<std::string>()
                                             : std::to_string(j["id"].get<long long>()))
                      : "row-" + std::to_string(auto_id);
        inst.question = j.at("question").get<std::string>();
        inst.context = j.at("context").get<std::string>();
        if (j.contains("answers") && j["answers"].is_object()) {
            const auto& answers = j["answers"];
            const auto& texts = answers.at("text");
            const auto& starts = answers.at("answer_start");
            if (!texts.empty()) inst.answer_text = texts[0].get<std::string>();
            if (!starts.empty()) inst.answer_start = starts[0].get<std::size_t>();
        } else if (j.contains("answer")) {
            inst.answer_text = j["answer"].get<std::string>();
            inst.answer_start = j.value("answer_start", std::size_t{0});
        }
        if (j.contains("bias_type"))
            inst.bias_type = bias_type_from_string(j["bias_type"].get<std::string>());
        else if (j.contains("type"))
            inst.bias_type = bias_type_from_string(j["type"].get<std::string>());
        if (j.contains("label")) {
            const auto& l = j["label"];
            if (l.is_number())
                inst.label = l.get<int>() == 1 ? Label::Low : Label::HighUnclear;
            else
                inst.label = label_from_string(l.get<std::string>());
        } else if (j.contains("class")) {
            inst.label = j["class"].get<int>() == 1 ? Label::Low : Label::HighUnclear;
        }
        out.push_back(std::move(inst));
    };

    const std::string raw = jsonl::read_text_file(path);
    // Accept either a JSON array or JSONL.
    json doc = json::parse(raw, nullptr, false);
    if (!doc.is_discarded() && doc.is_array()) {
        for (const auto& j : doc) {
            map_row(j);
            ++auto_id;
        }
    } else if (!doc.is_discarded() && doc.is_object() && doc.contains("data")) {
        for (const auto& j : doc["data"]) {
            map_row(j);
            ++auto_id;
        }
    } else {
        jsonl::for_each(path, [&](const json& j, std::size_t) {
            map_row(j);
            ++auto_id;
        });
    }
    return out;
}

void write_rejects_jsonl(const std::filesystem::path& path,
                         const std::vector<AnnotationReject>& rejects) {
    std::vector<json> rows;
    rows.reserve(rejects.size());
    for (const auto& r : rejects) {
        rows.push_back(json{{"record_key", r.record_key},
                            {"bias_type", to_string(r.bias_type)},
                            {"reason", r.reason},
                            {"best_similarity", r.best_similarity}});
    }
    jsonl::write_file(path, rows);
}

json split_manifest_to_json(const SplitManifest& m) {
    json per_type = json::object();
    for (const auto& [type, counts] : m.per_type)
        per_type[type] = {{"train", counts.first}, {"test", counts.second}};
    return json{{"seed", m.seed},
                {"test_fraction", m.test_fraction},
                {"train_ids", m.train_ids},
                {"test_ids", m.test_ids},
                {"per_type", per_type},
                {"warnings", m.warnings}};
}

SplitManifest split_manifest_from_json(const json& j) {
    SplitManifest m;
    m.seed = j.at("seed").get<std::uint64_t>();
    m.test_fraction = j.at("test_fraction").get<double>();
    m.train_ids = j.at("train_ids").get<std::vector<std::string>>();
    m.test_ids = j.at("test_ids").get<std::vector<std::string>>();
    if (j.contains("per_type")) {
        for (const auto& [type, counts] : j["per_type"].items())
            m.per_type[type] = {counts.at("train").get<std::size_t>(),
                                counts.at("test").get<std::size_t>()};
    }
    if (j.contains("warnings")) m.warnings = j["warnings"].get<std::vector<std::string>>();
    return m;
}

}  // namespace robkit::annotate
