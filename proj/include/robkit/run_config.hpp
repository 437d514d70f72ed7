#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

namespace robkit {

// One flat run configuration; flags override file values. Defaults mirror the
// documented pipeline parameters. The config hash is embedded in every
// artifact header so `report` can refuse to mix artifacts from different runs.
struct RunConfig {
    // Paths.
    std::string articles_dir;     // raw article files
    std::string reviews_dir;      // normalized review interchange files
    std::string run_dir = "run";  // all outputs land here

    // Pipeline parameters.
    std::uint64_t seed = 42;
    double threshold = 0.5;       // strict cosine threshold for matches
    int window = 3;               // context sentences on each side
    double test_fraction = 0.2;

    // Featurizer / baselines.
    std::size_t featurizer_k = 1000;
    int ngram_max = 3;
    double lr_l2 = 1e-3;
    double svm_c = 1.0;
    int baseline_epochs = 200;
    double baseline_lr = 0.5;

    // Tiny model.
    int tiny_hidden = 64;
    int tiny_layers = 2;
    int tiny_max_len = 512;
    std::size_t tiny_vocab_cap = 8000;
    int tiny_epochs = 10;
    double tiny_lr = 2e-3;
    double tiny_weight_decay = 0.01;
    int tiny_batch = 8;
    int tiny_grad_accum = 4;
    std::string tiny_mixing = "mean";  // or "attention"

    // Optional LLM endpoint block.
    std::string llm_url;
    std::string llm_model;
    int llm_shots = 0;

    nlohmann::json to_json() const;
    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig load(const std::filesystem::path& path);

    // FNV-1a 64 over the canonical serialization of the parameter fields.
    // Paths and the endpoint block stay out of the hash: the same dataset
    // evaluated from a different directory or against a different endpoint is
    // still the same run for provenance purposes.
    std::uint64_t hash() const;
};

std::uint64_t fnv1a64(const std::string& data);

}  // namespace robkit
