#include "robkit/run_config.hpp"

#include "robkit/error.hpp"
#include "robkit/jsonl.hpp"

namespace robkit {

std::uint64_t fnv1a64(const std::string& data) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

nlohmann::json RunConfig::to_json() const {
    return nlohmann::json{{"articles_dir", articles_dir},
                          {"reviews_dir", reviews_dir},
                          {"run_dir", run_dir},
                          {"seed", seed},
                          {"threshold", threshold},
                          {"window", window},
                          {"test_fraction", test_fraction},
                          {"featurizer_k", featurizer_k},
                          {"ngram_max", ngram_max},
                          {"lr_l2", lr_l2},
                          {"svm_c", svm_c},
                          {"baseline_epochs", baseline_epochs},
                          {"baseline_lr", baseline_lr},
                          {"tiny_hidden", tiny_hidden},
                          {"tiny_layers", tiny_layers},
                          {"tiny_max_len", tiny_max_len},
                          {"tiny_vocab_cap", tiny_vocab_cap},
                          {"tiny_epochs", tiny_epochs},
                          {"tiny_lr", tiny_lr},
                          {"tiny_weight_decay", tiny_weight_decay},
                          {"tiny_batch", tiny_batch},
                          {"tiny_grad_accum", tiny_grad_accum},
                          {"tiny_mixing", tiny_mixing},
                          {"llm_url", llm_url},
                          {"llm_model", llm_model},
                          {"llm_shots", llm_shots}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    RunConfig c;
    c.articles_dir = j.value("articles_dir", c.articles_dir);
    c.reviews_dir = j.value("reviews_dir", c.reviews_dir);
    c.run_dir = j.value("run_dir", c.run_dir);
    c.seed = j.value("seed", c.seed);
    c.threshold = j.value("threshold", c.threshold);
    c.window = j.value("window", c.window);
    c.test_fraction = j.value("test_fraction", c.test_fraction);
    c.featurizer_k = j.value("featurizer_k", c.featurizer_k);
    c.ngram_max = j.value("ngram_max", c.ngram_max);
    c.lr_l2 = j.value("lr_l2", c.lr_l2);
    c.svm_c = j.value("svm_c", c.svm_c);
    c.baseline_epochs = j.value("baseline_epochs", c.baseline_epochs);
    c.baseline_lr = j.value("baseline_lr", c.baseline_lr);
    c.tiny_hidden = j.value("tiny_hidden", c.tiny_hidden);
    c.tiny_layers = j.value("tiny_layers", c.tiny_layers);
    c.tiny_max_len = j.value("tiny_max_len", c.tiny_max_len);
    c.tiny_vocab_cap = j.value("tiny_vocab_cap", c.tiny_vocab_cap);
    c.tiny_epochs = j.value("tiny_epochs", c.tiny_epochs);
    c.tiny_lr = j.value("tiny_lr", c.tiny_lr);
    c.tiny_weight_decay = j.value("tiny_weight_decay", c.tiny_weight_decay);
    c.tiny_batch = j.value("tiny_batch", c.tiny_batch);
    c.tiny_grad_accum = j.value("tiny_grad_accum", c.tiny_grad_accum);
    c.tiny_mixing = j.value("tiny_mixing", c.tiny_mixing);
    c.llm_url = j.value("llm_url", c.llm_url);
    c.llm_model = j.value("llm_model", c.llm_model);
    c.llm_shots = j.value("llm_shots", c.llm_shots);
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    const std::string raw = jsonl::read_text_file(path);
    nlohmann::json j = nlohmann::json::parse(raw, nullptr, false);
    if (j.is_discarded()) throw validation_error(path.string() + ": invalid JSON config");
    return from_json(j);
}

std::uint64_t RunConfig::hash() const {
    nlohmann::json j = to_json();
    for (const char* field : {"articles_dir", "reviews_dir", "run_dir", "llm_url", "llm_model",
                              "llm_shots"})
        j.erase(field);
    return fnv1a64(j.dump());
}

}  // namespace robkit
