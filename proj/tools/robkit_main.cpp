// robkit: risk-of-bias dataset construction and evaluation pipeline.
//
// Subcommands mirror the pipeline stages: ingest, parse-reviews, index
// (build/stats), annotate, split, train-baseline, train-tiny, eval, llm-eval,
// report, and pipeline (which chains everything under one run directory).
// Exit codes: 0 ok, 1 internal error, 2 missing input, 3 validation failure.
// Errors are emitted as one JSON object on stderr.

#include <CLI11.hpp>

#include "robkit/annotate.hpp"
#include "robkit/baselines.hpp"
#include "robkit/binio.hpp"
#include "robkit/corpus.hpp"
#include "robkit/error.hpp"
#include "robkit/eval.hpp"
#include "robkit/jsonl.hpp"
#include "robkit/llm_client.hpp"
#include "robkit/reviews.hpp"
#include "robkit/run_config.hpp"
#include "robkit/tfidf_index.hpp"
#include "robkit/tinymodel.hpp"
#include "robkit/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>

namespace fs = std::filesystem;
using robkit::json;
using robkit::RunConfig;

namespace {

// --- run manifest -------------------------------------------------------------
// Every artifact is registered in <dir>/manifest.json with its stage and the
// run-config hash, which `report` uses to refuse mixed-run inputs.

json load_manifest(const fs::path& dir) {
    const fs::path path = dir / "manifest.json";
    if (!fs::exists(path)) return json{{"artifacts", json::object()}};
    json m = json::parse(robkit::jsonl::read_text_file(path), nullptr, false);
    if (m.is_discarded() || !m.contains("artifacts"))
        throw robkit::validation_error(path.string() + ": corrupt manifest");
    return m;
}

void record_artifact(const fs::path& artifact, const std::string& stage, std::uint64_t hash) {
    const fs::path dir = artifact.parent_path().empty() ? fs::path(".") : artifact.parent_path();
    json manifest = load_manifest(dir);
    manifest["artifacts"][artifact.filename().string()] =
        json{{"stage", stage}, {"config_hash", hash}};
    robkit::jsonl::write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

std::optional<std::uint64_t> artifact_hash(const fs::path& artifact) {
    const fs::path dir = artifact.parent_path().empty() ? fs::path(".") : artifact.parent_path();
    if (!fs::exists(dir / "manifest.json")) return std::nullopt;
    const json manifest = load_manifest(dir);
    const auto& artifacts = manifest["artifacts"];
    const std::string name = artifact.filename().string();
    if (!artifacts.contains(name)) return std::nullopt;
    return artifacts[name].value("config_hash", std::uint64_t{0});
}

// --- shared loading helpers -----------------------------------------------------

std::vector<robkit::Instance> load_instances(const fs::path& path, bool adapter) {
    if (!fs::exists(path)) throw robkit::missing_input("instances file not found: " + path.string());
    return adapter ? robkit::annotate::read_instances_adapter(path)
                   : robkit::annotate::read_instances_jsonl(path);
}

std::vector<robkit::Instance> filter_side(const std::vector<robkit::Instance>& instances,
                                          const fs::path& split_path, const std::string& side) {
    if (split_path.empty()) return instances;
    if (!fs::exists(split_path))
        throw robkit::missing_input("split manifest not found: " + split_path.string());
    const json j = json::parse(robkit::jsonl::read_text_file(split_path));
    const auto manifest = robkit::annotate::split_manifest_from_json(j);
    const auto& ids = side == "test" ? manifest.test_ids : manifest.train_ids;
    const std::set<std::string> keep(ids.begin(), ids.end());
    std::vector<robkit::Instance> out;
    for (const auto& inst : instances)
        if (keep.count(inst.id)) out.push_back(inst);
    return out;
}

// --- stage implementations --------------------------------------------------------

int cmd_ingest(const fs::path& articles_dir, const fs::path& out, std::uint64_t hash) {
    robkit::corpus::IngestStats stats;
    const auto articles = robkit::corpus::ingest_directory(articles_dir, &stats);
    if (articles.empty())
        throw robkit::missing_input("no .txt or .xml articles under " + articles_dir.string());
    if (!out.parent_path().empty()) fs::create_directories(out.parent_path());
    robkit::corpus::write_articles_jsonl(out, articles);
    record_artifact(out, "ingest", hash);
    std::cout << "ingested " << articles.size() << " articles ("
              << stats.dropped_tables << " tables, " << stats.dropped_figures
              << " figures, " << stats.dropped_ref_lists << " reference lists dropped)\n";
    return 0;
}

int cmd_parse_reviews(const fs::path& reviews_dir, const fs::path& out, const fs::path& rejects_out,
                      std::uint64_t hash) {
    const auto result = robkit::reviews::parse_review_directory(reviews_dir);
    if (!out.parent_path().empty()) fs::create_directories(out.parent_path());
    std::vector<json> rows;
    for (const auto& r : result.records) rows.push_back(robkit::reviews::to_json(r));
    robkit::jsonl::write_file(out, rows);
    record_artifact(out, "parse-reviews", hash);
    if (!rejects_out.empty()) {
        std::vector<json> rejects;
        for (const auto& r : result.rejects) rejects.push_back(robkit::reviews::to_json(r));
        robkit::jsonl::write_file(rejects_out, rejects);
    }
    std::cout << "parsed " << result.records.size() << " support records, "
              << result.rejects.size() << " rejected rows\n";
    return 0;
}

int cmd_index_build(const fs::path& articles_jsonl, const fs::path& out, std::uint64_t hash) {
    const auto articles = robkit::corpus::read_articles_jsonl(articles_jsonl);
    const auto idx = robkit::index::TfidfIndex::build(articles);
    if (!out.parent_path().empty()) fs::create_directories(out.parent_path());
    idx.save(out, hash);
    record_artifact(out, "index", hash);
    const auto stats = idx.stats();
    std::cout << "indexed " << stats.num_rows << " sentences, vocabulary " << stats.vocabulary_size
              << "\n";
    return 0;
}

int cmd_index_stats(const fs::path& index_path) {
    const auto idx = robkit::index::TfidfIndex::load(index_path);
    const auto stats = idx.stats();
    std::cout << "sentences: " << stats.num_rows << "\n"
              << "vocabulary: " << stats.vocabulary_size << "\n"
              << "nonzeros: " << stats.nonzeros << "\n"
              << "density: " << stats.density << "\n";
    return 0;
}

int cmd_annotate(const fs::path& records_path, const fs::path& articles_path,
                 const fs::path& index_path, const fs::path& out_dir, const RunConfig& cfg) {
    std::vector<robkit::SupportRecord> records;
    robkit::jsonl::for_each(records_path, [&](const json& j, std::size_t) {
        records.push_back(robkit::reviews::support_record_from_json(j));
    });
    const auto articles = robkit::corpus::read_articles_jsonl(articles_path);
    const auto idx = robkit::index::TfidfIndex::load(index_path);

    robkit::annotate::AnnotationConfig acfg;
    acfg.threshold = cfg.threshold;
    acfg.window = cfg.window;
    const auto result = robkit::annotate::run_annotation(records, articles, idx, acfg);

    fs::create_directories(out_dir);
    robkit::annotate::write_instances_jsonl(out_dir / "instances.jsonl", result.instances);
    robkit::annotate::write_rejects_jsonl(out_dir / "rejects.jsonl", result.rejects);
    record_artifact(out_dir / "instances.jsonl", "annotate", cfg.hash());
    record_artifact(out_dir / "rejects.jsonl", "annotate", cfg.hash());

    json class_counts = json::object();
    for (const auto& [type, counts] : result.stats.class_counts)
        class_counts[type] = {{"low", counts.first}, {"high_unclear", counts.second}};
    const json stats{{"records_in", result.stats.records_in},
                     {"instances_out", result.stats.instances_out},
                     {"rejects_out", result.stats.rejects_out},
                     {"class_counts", class_counts},
                     {"reject_reasons", result.stats.reject_reasons}};
    robkit::jsonl::write_text_file(out_dir / "annotation_stats.json", stats.dump(2) + "\n");
    std::cout << "annotated " << result.instances.size() << " instances, "
              << result.rejects.size() << " rejects from " << records.size() << " records\n";
    return 0;
}

int cmd_split(const fs::path& instances_path, double fraction, std::uint64_t seed,
              const fs::path& out, std::uint64_t hash) {
    const auto instances = load_instances(instances_path, false);
    const auto manifest = robkit::annotate::stratified_split(instances, fraction, seed);
    if (!out.parent_path().empty()) fs::create_directories(out.parent_path());
    robkit::jsonl::write_text_file(out,
                                   robkit::annotate::split_manifest_to_json(manifest).dump(2) + "\n");
    record_artifact(out, "split", hash);
    std::cout << "split " << manifest.train_ids.size() << " train / " << manifest.test_ids.size()
              << " test\n";
    for (const auto& w : manifest.warnings) std::cout << "warning: " << w << "\n";
    return 0;
}

struct BaselineArtifacts {
    robkit::baselines::NgramFeaturizer featurizer;
    robkit::baselines::LinearModel model;
};

BaselineArtifacts train_one_baseline(const std::vector<robkit::Instance>& train,
                                     const std::string& kind, const RunConfig& cfg) {
    std::vector<std::string> texts;
    std::vector<int> labels;
    for (const auto& inst : train) {
        texts.push_back(robkit::baselines::instance_text(inst));
        labels.push_back(inst.label == robkit::Label::Low ? 1 : 0);
    }
    robkit::baselines::FeaturizerConfig fcfg;
    fcfg.top_k = cfg.featurizer_k;
    fcfg.max_n = cfg.ngram_max;
    auto featurizer = robkit::baselines::NgramFeaturizer::fit(texts, fcfg);
    const auto x = featurizer.transform_batch(texts);

    robkit::baselines::TrainConfig tcfg;
    tcfg.l2 = cfg.lr_l2;
    tcfg.c = cfg.svm_c;
    tcfg.epochs = cfg.baseline_epochs;
    tcfg.lr = cfg.baseline_lr;
    tcfg.seed = cfg.seed;
    auto model = kind == "svm" ? robkit::baselines::train_svm(x, labels, tcfg)
                               : robkit::baselines::train_logreg(x, labels, tcfg);
    return {std::move(featurizer), std::move(model)};
}

int cmd_train_baseline(const fs::path& train_path, const fs::path& split_path,
                       const std::string& kind, bool per_bias_type, const fs::path& out_dir,
                       const RunConfig& cfg) {
    if (kind != "lr" && kind != "svm")
        throw robkit::validation_error("train-baseline: kind must be lr or svm");
    auto train = filter_side(load_instances(train_path, false), split_path, "train");
    if (train.empty()) throw robkit::validation_error("train-baseline: empty training set");
    fs::create_directories(out_dir);

    auto save = [&](const std::vector<robkit::Instance>& subset, const std::string& name) {
        auto artifacts = train_one_baseline(subset, kind, cfg);
        const fs::path path = out_dir / (name + ".bin");
        artifacts.model.save(path, json{{"featurizer", artifacts.featurizer.to_json()},
                                        {"seed", cfg.seed},
                                        {"config_hash", cfg.hash()},
                                        {"k", cfg.featurizer_k},
                                        {"ngram_max", cfg.ngram_max},
                                        {"epochs", cfg.baseline_epochs},
                                        {"lr", cfg.baseline_lr},
                                        {"l2", cfg.lr_l2},
                                        {"c", cfg.svm_c},
                                        {"model_name", name}});
        record_artifact(path, "train-baseline", cfg.hash());
        std::cout << "trained " << name << " on " << subset.size() << " instances\n";
    };

    save(train, kind);
    if (per_bias_type) {
        for (int t = 0; t < robkit::kNumBiasTypes; ++t) {
            const auto type = static_cast<robkit::BiasType>(t);
            std::vector<robkit::Instance> subset;
            for (const auto& inst : train)
                if (inst.bias_type == type) subset.push_back(inst);
            int pos = 0;
            for (const auto& inst : subset) pos += inst.label == robkit::Label::Low;
            if (subset.size() < 2 || pos == 0 || pos == static_cast<int>(subset.size())) {
                std::cout << "skipping per-type model " << robkit::to_string(type)
                          << " (insufficient class coverage)\n";
                continue;
            }
            save(subset, kind + "_" + robkit::to_string(type));
        }
    }
    return 0;
}

robkit::tiny::TinyConfig tiny_config_from(const RunConfig& cfg) {
    robkit::tiny::TinyConfig tcfg;
    tcfg.hidden = cfg.tiny_hidden;
    tcfg.layers = cfg.tiny_layers;
    tcfg.max_len = cfg.tiny_max_len;
    tcfg.vocab_cap = cfg.tiny_vocab_cap;
    tcfg.mixing = cfg.tiny_mixing == "attention" ? robkit::tiny::Mixing::Attention
                                                 : robkit::tiny::Mixing::Mean;
    return tcfg;
}

robkit::tiny::TrainOptions tiny_train_options(const RunConfig& cfg) {
    robkit::tiny::TrainOptions opts;
    opts.epochs = cfg.tiny_epochs;
    opts.lr = cfg.tiny_lr;
    opts.weight_decay = cfg.tiny_weight_decay;
    opts.batch_size = cfg.tiny_batch;
    opts.grad_accum = cfg.tiny_grad_accum;
    opts.seed = cfg.seed;
    return opts;
}

int cmd_train_tiny(const fs::path& train_path, const fs::path& split_path, const std::string& task,
                   const fs::path& dev_path, const fs::path& out_dir, const RunConfig& cfg) {
    if (task != "ext" && task != "gen")
        throw robkit::validation_error("train-tiny: task must be ext or gen");
    auto train = filter_side(load_instances(train_path, false), split_path, "train");
    if (train.empty()) throw robkit::validation_error("train-tiny: empty training set");
    std::vector<robkit::Instance> dev;
    if (!dev_path.empty()) dev = load_instances(dev_path, false);
    fs::create_directories(out_dir);

    std::vector<std::string> vocab_texts;
    for (const auto& inst : train) {
        vocab_texts.push_back(inst.question);
        vocab_texts.push_back(inst.context);
    }
    const auto vocab = robkit::tiny::Vocab::build(vocab_texts, cfg.tiny_vocab_cap);
    const auto tcfg = tiny_config_from(cfg);
    const auto opts = tiny_train_options(cfg);
    const json header{{"seed", cfg.seed}, {"config_hash", cfg.hash()}};

    if (task == "ext") {
        std::size_t skipped = 0;
        const auto spans = robkit::tiny::make_span_examples(vocab, train, tcfg.max_len, &skipped);
        if (spans.empty()) throw robkit::validation_error("train-tiny: no alignable span examples");
        robkit::tiny::ExtractiveModel span_model(tcfg, vocab, cfg.seed);
        const auto report = robkit::tiny::train_extractive(span_model, spans, opts);
        span_model.save(out_dir / "tiny_ext_span.bin", header);
        record_artifact(out_dir / "tiny_ext_span.bin", "train-tiny", cfg.hash());

        // The answer classifier trains on gold answer text; evaluation feeds
        // it the extracted text.
        std::vector<robkit::tiny::ClassifyExample> cls;
        for (const auto& inst : train)
            cls.push_back({vocab.encode(inst.answer_text),
                           inst.label == robkit::Label::Low ? 1 : 0});
        robkit::tiny::AnswerClassifier cls_model(tcfg, vocab, cfg.seed + 1);
        robkit::tiny::train_classifier(cls_model, cls, opts);
        cls_model.save(out_dir / "tiny_ext_cls.bin", header);
        record_artifact(out_dir / "tiny_ext_cls.bin", "train-tiny", cfg.hash());

        std::cout << "trained tiny-ext on " << spans.size() << " spans (skipped " << skipped
                  << "); final epoch loss " << report.epoch_losses.back() << "\n";
        if (!dev.empty()) {
            double f1 = 0.0, em = 0.0;
            std::size_t scored = 0;
            for (const auto& inst : dev) {
                try {
                    const auto seq = robkit::tiny::pack_sequence(vocab, inst.question, inst.context,
                                                                 tcfg.max_len);
                    const auto s =
                        robkit::eval::span_f1_em(span_model.extract_span(seq, inst.context),
                                                 inst.answer_text);
                    f1 += s.f1;
                    em += s.em;
                    ++scored;
                } catch (const robkit::Error&) {
                }
            }
            if (scored)
                std::cout << "dev span F1 " << f1 / static_cast<double>(scored) << ", EM "
                          << em / static_cast<double>(scored) << " over " << scored
                          << " instances\n";
        }
    } else {
        const auto examples = robkit::tiny::make_generative_examples(vocab, train, tcfg.max_len);
        if (examples.empty()) throw robkit::validation_error("train-tiny: no usable examples");
        int pos = 0;
        for (const auto& ex : examples) pos += ex.label;
        const double pos_weight =
            pos > 0 && pos < static_cast<int>(examples.size())
                ? static_cast<double>(examples.size() - pos) / static_cast<double>(pos)
                : 1.0;
        robkit::tiny::GenerativeModel model(tcfg, vocab, cfg.seed);
        const auto report = robkit::tiny::train_generative(model, examples, opts, pos_weight);
        model.save(out_dir / "tiny_gen.bin",
                   json{{"seed", cfg.seed}, {"config_hash", cfg.hash()}, {"pos_weight", pos_weight}});
        record_artifact(out_dir / "tiny_gen.bin", "train-tiny", cfg.hash());
        std::cout << "trained tiny-gen on " << examples.size() << " examples; final epoch loss "
                  << report.epoch_losses.back() << "\n";
        if (!dev.empty()) {
            const auto dev_examples =
                robkit::tiny::make_generative_examples(model.vocab(), dev, tcfg.max_len);
            int correct = 0;
            for (const auto& ex : dev_examples)
                correct += ((model.classify_logit(ex.seq, ex.answer_ids) >= 0.0) == (ex.label == 1));
            if (!dev_examples.empty())
                std::cout << "dev classification accuracy "
                          << static_cast<double>(correct) /
                                 static_cast<double>(dev_examples.size())
                          << " over " << dev_examples.size() << " instances\n";
        }
    }
    return 0;
}

// Model files are dispatched on their magic bytes + header kind.
std::string sniff_kind(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw robkit::missing_input("model file not found: " + path.string());
    char magic[4] = {};
    in.read(magic, 4);
    const std::string m(magic, 4);
    if (m == "RKLM") return "linear";
    if (m == "RKTM") return "tiny";
    throw robkit::validation_error(path.string() + ": unrecognized model file");
}

std::vector<robkit::eval::Prediction> predict_with_model(
    const fs::path& model_path, const std::vector<robkit::Instance>& instances) {
    std::vector<robkit::eval::Prediction> preds;
    const std::string kind = sniff_kind(model_path);

    if (kind == "linear") {
        json header;
        const auto model = robkit::baselines::LinearModel::load(model_path, &header);
        if (!header.contains("featurizer"))
            throw robkit::validation_error(model_path.string() + ": missing featurizer header");
        const auto featurizer = robkit::baselines::NgramFeaturizer::from_json(header["featurizer"]);
        const std::string name = header.value("model_name", header.value("kind", "linear"));
        for (const auto& inst : instances) {
            robkit::eval::Prediction p;
            p.id = inst.id;
            p.model = name;
            // Baselines consume question ++ expected answer; they make no
            // span prediction of their own.
            const auto row = featurizer.transform(robkit::baselines::instance_text(inst));
            const double raw = model.score(row);
            p.score = model.kind == robkit::baselines::ModelKind::Logistic
                          ? raw
                          : 1.0 / (1.0 + std::exp(-raw));  // margin squashed for reporting
            p.label = model.predict(row) == 1 ? robkit::Label::Low : robkit::Label::HighUnclear;
            p.answer_text = inst.answer_text;
            preds.push_back(std::move(p));
        }
        return preds;
    }

    robkit::binio::Reader probe(model_path, "RKTM", 1);
    const std::string tiny_kind = probe.header().value("kind", "");
    if (tiny_kind == "extractive") {
        const auto span_model = robkit::tiny::ExtractiveModel::load(model_path);
        const fs::path cls_path = model_path.parent_path() / "tiny_ext_cls.bin";
        std::optional<robkit::tiny::AnswerClassifier> classifier;
        if (fs::exists(cls_path)) classifier = robkit::tiny::AnswerClassifier::load(cls_path);
        for (const auto& inst : instances) {
            robkit::eval::Prediction p;
            p.id = inst.id;
            p.model = "tiny-ext";
            try {
                const auto seq = robkit::tiny::pack_sequence(
                    span_model.vocab(), inst.question, inst.context, span_model.config().max_len);
                p.answer_text = span_model.extract_span(seq, inst.context);
            } catch (const robkit::Error&) {
                p.answer_text = "";  // over-long context: scored as an empty answer
            }
            if (classifier) {
                p.score = classifier->prob_positive(classifier->vocab().encode(p.answer_text));
                p.label = p.score >= 0.5 ? robkit::Label::Low : robkit::Label::HighUnclear;
            }
            preds.push_back(std::move(p));
        }
        return preds;
    }
    if (tiny_kind == "generative") {
        auto model = robkit::tiny::GenerativeModel::load(model_path);
        for (const auto& inst : instances) {
            robkit::eval::Prediction p;
            p.id = inst.id;
            p.model = "tiny-gen";
            try {
                const auto seq = robkit::tiny::pack_sequence(model.vocab(), inst.question,
                                                             inst.context, model.config().max_len);
                auto generated = model.generate(seq, 48);
                p.answer_text = model.vocab().decode(generated);
                if (generated.empty()) generated.push_back(robkit::tiny::Vocab::kEos);
                const double logit = model.classify_logit(seq, generated);
                p.score = 1.0 / (1.0 + std::exp(-logit));
            } catch (const robkit::Error&) {
                p.answer_text = "";
                p.score = 0.0;
            }
            p.label = p.score >= 0.5 ? robkit::Label::Low : robkit::Label::HighUnclear;
            preds.push_back(std::move(p));
        }
        return preds;
    }
    throw robkit::validation_error(model_path.string() + ": classifier checkpoints are evaluated "
                                   "through their paired span model");
}

int cmd_eval(const fs::path& instances_path, const fs::path& split_path,
             const std::vector<std::string>& model_paths, const fs::path& out_dir,
             const RunConfig& cfg, bool adapter) {
    const auto instances = filter_side(load_instances(instances_path, adapter), split_path, "test");
    if (instances.empty()) throw robkit::validation_error("eval: empty evaluation set");
    fs::create_directories(out_dir);
    for (const auto& mp : model_paths) {
        const auto preds = predict_with_model(mp, instances);
        if (preds.empty()) continue;
        const fs::path out = out_dir / ("predictions_" + preds.front().model + ".jsonl");
        robkit::eval::write_predictions_jsonl(out, preds);
        record_artifact(out, "eval", cfg.hash());
        std::cout << "evaluated " << preds.front().model << " on " << preds.size()
                  << " instances -> " << out.string() << "\n";
    }
    return 0;
}

int cmd_llm_eval(const fs::path& instances_path, const fs::path& split_path, const RunConfig& cfg,
                 const fs::path& log_path, std::uint64_t hash) {
    const auto all = load_instances(instances_path, false);
    const auto test = filter_side(all, split_path, "test");
    const auto train = filter_side(all, split_path, "train");
    if (test.empty()) throw robkit::validation_error("llm-eval: empty test set");
    if (cfg.llm_url.empty()) throw robkit::validation_error("llm-eval: no endpoint url configured");

    robkit::llm::RunOptions options;
    options.shots = cfg.llm_shots;
    options.seed = cfg.seed;
    options.endpoint.url = cfg.llm_url;
    options.endpoint.model = cfg.llm_model;
    if (const char* key = std::getenv("ROBKIT_LLM_API_KEY")) options.endpoint.api_key = key;

    const auto transport = robkit::llm::make_http_transport(options.endpoint);
    const auto preds = robkit::llm::run_llm_eval(test, train, options, log_path, transport);

    const fs::path out_dir = log_path.parent_path().empty() ? fs::path(".") : log_path.parent_path();
    const fs::path out = out_dir / ("predictions_" + preds.front().model + ".jsonl");
    robkit::eval::write_predictions_jsonl(out, preds);
    record_artifact(out, "llm-eval", hash);
    std::cout << "llm-eval wrote " << preds.size() << " verdicts to " << out.string() << "\n";
    return 0;
}

int cmd_report(const fs::path& instances_path, const fs::path& split_path,
               const std::vector<std::string>& prediction_paths, const fs::path& out_dir,
               bool force, bool adapter) {
    const auto instances = filter_side(load_instances(instances_path, adapter), split_path, "test");

    // Config-hash consistency across all inputs, unless forced.
    std::optional<std::uint64_t> expected = artifact_hash(instances_path);
    for (const auto& pp : prediction_paths) {
        const auto h = artifact_hash(pp);
        if (!h) continue;
        if (expected && *h != *expected) {
            if (!force)
                throw robkit::validation_error(
                    "report: artifact " + pp + " has config hash " + std::to_string(*h) +
                    " but " + instances_path.string() + " has " + std::to_string(*expected) +
                    "; rerun the pipeline or pass --force");
            std::cerr << "warning: mixing artifacts with different config hashes (--force)\n";
        }
        if (!expected) expected = h;
    }

    std::vector<robkit::eval::Prediction> predictions;
    for (const auto& pp : prediction_paths) {
        if (!fs::exists(pp)) throw robkit::missing_input("predictions file not found: " + pp);
        auto preds = robkit::eval::read_predictions_jsonl(pp);
        std::move(preds.begin(), preds.end(), std::back_inserter(predictions));
    }
    auto report = robkit::eval::build_report(predictions, instances);
    robkit::eval::write_report_files(report, out_dir);

    // Pairwise Welch t-tests on per-instance span F1 when 2+ models share ids.
    std::vector<std::string> models;
    for (const auto& [model, _] : report.blocks) models.push_back(model);
    if (models.size() >= 2) {
        std::map<std::string, const robkit::Instance*> inst_by_id;
        for (const auto& inst : instances) inst_by_id[inst.id] = &inst;
        std::map<std::string, std::map<std::string, double>> f1_by_model;
        for (const auto& pred : predictions) {
            auto it = inst_by_id.find(pred.id);
            if (it != inst_by_id.end())
                f1_by_model[pred.model][pred.id] =
                    robkit::eval::span_f1_em(pred.answer_text, it->second->answer_text).f1;
        }
        std::string md = robkit::jsonl::read_text_file(out_dir / "report.md");
        md += "\n## Pairwise Welch t-tests (per-instance span F1)\n\n"
              "| Model A | Model B | t | df | p | significant (p<0.05) |\n|---|---|---|---|---|---|\n";
        for (std::size_t a = 0; a < models.size(); ++a)
            for (std::size_t b = a + 1; b < models.size(); ++b) {
                std::vector<double> xs, ys;
                for (const auto& [id, f1] : f1_by_model[models[a]]) {
                    auto it = f1_by_model[models[b]].find(id);
                    if (it != f1_by_model[models[b]].end()) {
                        xs.push_back(f1);
                        ys.push_back(it->second);
                    }
                }
                char row[256];
                try {
                    const auto r = robkit::eval::welch_t_test(xs, ys);
                    std::snprintf(row, sizeof(row), "| %s | %s | %.4f | %.2f | %.4g | %s |\n",
                                  models[a].c_str(), models[b].c_str(), r.t, r.df, r.p,
                                  r.significant ? "yes" : "no");
                } catch (const robkit::Error&) {
                    std::snprintf(row, sizeof(row), "| %s | %s | - | - | - | degenerate |\n",
                                  models[a].c_str(), models[b].c_str());
                }
                md += row;
            }
        robkit::jsonl::write_text_file(out_dir / "report.md", md);
    }

    std::cout << "report written to " << out_dir.string() << " (" << report.blocks.size()
              << " models)\n";
    for (const auto& [model, ids] : report.missing)
        std::cout << "missing predictions for " << model << ": " << ids.size() << "\n";
    return 0;
}

int cmd_pipeline(const RunConfig& cfg) {
    const fs::path run_dir = cfg.run_dir;
    fs::create_directories(run_dir);
    const std::uint64_t hash = cfg.hash();

    cmd_ingest(cfg.articles_dir, run_dir / "articles.jsonl", hash);
    cmd_parse_reviews(cfg.reviews_dir, run_dir / "records.jsonl", run_dir / "review_rejects.jsonl",
                      hash);
    cmd_index_build(run_dir / "articles.jsonl", run_dir / "index.bin", hash);
    cmd_annotate(run_dir / "records.jsonl", run_dir / "articles.jsonl", run_dir / "index.bin",
                 run_dir, cfg);
    cmd_split(run_dir / "instances.jsonl", cfg.test_fraction, cfg.seed, run_dir / "split.json",
              hash);
    cmd_train_baseline(run_dir / "instances.jsonl", run_dir / "split.json", "lr", false,
                       run_dir / "models", cfg);
    cmd_train_baseline(run_dir / "instances.jsonl", run_dir / "split.json", "svm", false,
                       run_dir / "models", cfg);
    cmd_train_tiny(run_dir / "instances.jsonl", run_dir / "split.json", "ext", "",
                   run_dir / "models", cfg);
    cmd_eval(run_dir / "instances.jsonl", run_dir / "split.json",
             {(run_dir / "models" / "lr.bin").string(), (run_dir / "models" / "svm.bin").string(),
              (run_dir / "models" / "tiny_ext_span.bin").string()},
             run_dir, cfg, false);
    if (!cfg.llm_url.empty())
        cmd_llm_eval(run_dir / "instances.jsonl", run_dir / "split.json", cfg,
                     run_dir / "llm_log.jsonl", hash);
    std::vector<std::string> prediction_files;
    for (const auto& entry : fs::directory_iterator(run_dir))
        if (entry.path().filename().string().rfind("predictions_", 0) == 0)
            prediction_files.push_back(entry.path().string());
    std::sort(prediction_files.begin(), prediction_files.end());
    cmd_report(run_dir / "instances.jsonl", run_dir / "split.json", prediction_files,
               run_dir / "report", false, false);
    robkit::jsonl::write_text_file(run_dir / "config.json", cfg.to_json().dump(2) + "\n");
    std::cout << "pipeline complete under " << run_dir.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"risk-of-bias MRC dataset pipeline and evaluation harness"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may follow the subcommand name

    std::string config_path;
    RunConfig cfg;
    app.add_option("--config", config_path, "JSON run-config file (flags override)");

    std::optional<std::uint64_t> seed_flag;
    std::optional<double> threshold_flag;
    std::optional<int> window_flag;
    app.add_option("--seed", seed_flag, "random seed override");
    app.add_option("--threshold", threshold_flag, "cosine similarity threshold (strict >)");
    app.add_option("--window", window_flag, "context sentences on each side");

    auto* ingest = app.add_subcommand("ingest", "segment raw articles into articles.jsonl");
    std::string in_dir, out_path;
    ingest->add_option("--articles", in_dir, "directory of <pubmed_id>.txt/.xml files")->required();
    ingest->add_option("--out", out_path, "output articles.jsonl")->required();

    auto* parse = app.add_subcommand("parse-reviews", "parse review interchange files");
    std::string reviews_dir, records_out, review_rejects_out;
    parse->add_option("--reviews", reviews_dir, "directory of review .json files")->required();
    parse->add_option("--out", records_out, "output records.jsonl")->required();
    parse->add_option("--rejects", review_rejects_out, "output rejected rows jsonl");

    auto* index_cmd = app.add_subcommand("index", "tf-idf sentence index");
    index_cmd->require_subcommand(1);
    auto* index_build = index_cmd->add_subcommand("build", "build the index");
    std::string idx_articles, idx_out;
    index_build->add_option("--articles", idx_articles, "articles.jsonl")->required();
    index_build->add_option("--out", idx_out, "output index file")->required();
    auto* index_stats = index_cmd->add_subcommand("stats", "print index statistics");
    std::string idx_path;
    index_stats->add_option("--index", idx_path, "index file")->required();

    auto* annotate_cmd = app.add_subcommand("annotate", "distant-supervision matching");
    std::string ann_records, ann_articles, ann_index, ann_out;
    annotate_cmd->add_option("--records", ann_records, "records.jsonl")->required();
    annotate_cmd->add_option("--articles", ann_articles, "articles.jsonl")->required();
    annotate_cmd->add_option("--index", ann_index, "index file")->required();
    annotate_cmd->add_option("--out", ann_out, "output directory")->required();

    auto* split_cmd = app.add_subcommand("split", "stratified train/test split");
    std::string split_instances, split_out;
    std::optional<double> split_fraction;
    split_cmd->add_option("--instances", split_instances, "instances.jsonl")->required();
    split_cmd->add_option("--fraction", split_fraction, "test fraction (default from config)");
    split_cmd->add_option("--out", split_out, "output split.json")->required();

    auto* tb = app.add_subcommand("train-baseline", "train tf-idf n-gram linear models");
    std::string tb_kind, tb_train, tb_split, tb_out;
    bool tb_per_type = false;
    tb->add_option("--kind", tb_kind, "lr or svm")->required();
    tb->add_option("--train", tb_train, "instances.jsonl")->required();
    tb->add_option("--split", tb_split, "split.json (train side used)");
    tb->add_flag("--per-bias-type", tb_per_type, "also train one model per bias type");
    tb->add_option("--out", tb_out, "output model directory")->required();

    auto* tt = app.add_subcommand("train-tiny", "train the desk-scale neural models");
    std::string tt_task, tt_train, tt_split, tt_dev, tt_out;
    tt->add_option("--task", tt_task, "ext or gen")->required();
    tt->add_option("--train", tt_train, "instances.jsonl")->required();
    tt->add_option("--split", tt_split, "split.json (train side used)");
    tt->add_option("--dev", tt_dev, "held-out instances for post-training metrics");
    tt->add_option("--out", tt_out, "output model directory")->required();

    auto* ev = app.add_subcommand("eval", "run models over the test split");
    std::string ev_instances, ev_split, ev_out;
    std::vector<std::string> ev_models;
    bool ev_adapter = false;
    ev->add_option("--instances", ev_instances, "instances.jsonl")->required();
    ev->add_option("--split", ev_split, "split.json (test side used)");
    ev->add_option("--model", ev_models, "model file (repeatable)")->required();
    ev->add_flag("--adapter", ev_adapter, "read instances through the dataset adapter");
    ev->add_option("--out", ev_out, "output directory for predictions")->required();

    auto* le = app.add_subcommand("llm-eval", "evaluate a chat-completion endpoint");
    std::string le_instances, le_split, le_log, le_url, le_model;
    std::optional<int> le_shots;
    le->add_option("--instances", le_instances, "instances.jsonl")->required();
    le->add_option("--split", le_split, "split.json");
    le->add_option("--log", le_log, "audit log path (llm_log.jsonl)")->required();
    le->add_option("--url", le_url, "endpoint base url");
    le->add_option("--model", le_model, "endpoint model name");
    le->add_option("--shots", le_shots, "0, 1 or 3");

    auto* rp = app.add_subcommand("report", "assemble metric report from predictions");
    std::string rp_instances, rp_split, rp_out;
    std::vector<std::string> rp_preds;
    bool rp_force = false, rp_adapter = false;
    rp->add_option("--instances", rp_instances, "instances.jsonl")->required();
    rp->add_option("--split", rp_split, "split.json (test side used)");
    rp->add_option("--predictions", rp_preds, "predictions jsonl (repeatable)")->required();
    rp->add_flag("--adapter", rp_adapter, "read instances through the dataset adapter");
    rp->add_option("--out", rp_out, "report output directory")->required();
    rp->add_flag("--force", rp_force, "allow mixing artifacts with different config hashes");

    auto* pl = app.add_subcommand("pipeline", "run every stage under the config's run_dir");
    std::string pl_articles, pl_reviews, pl_run_dir;
    pl->add_option("--articles", pl_articles, "raw article directory");
    pl->add_option("--reviews", pl_reviews, "review interchange directory");
    pl->add_option("--run-dir", pl_run_dir, "output run directory");

    try {
        app.parse(argc, argv);

        if (!config_path.empty()) cfg = RunConfig::load(config_path);
        if (seed_flag) cfg.seed = *seed_flag;
        if (threshold_flag) cfg.threshold = *threshold_flag;
        if (window_flag) cfg.window = *window_flag;

        if (*ingest) return cmd_ingest(in_dir, out_path, cfg.hash());
        if (*parse)
            return cmd_parse_reviews(reviews_dir, records_out, review_rejects_out, cfg.hash());
        if (*index_build) return cmd_index_build(idx_articles, idx_out, cfg.hash());
        if (*index_stats) return cmd_index_stats(idx_path);
        if (*annotate_cmd) return cmd_annotate(ann_records, ann_articles, ann_index, ann_out, cfg);
        if (*split_cmd)
            return cmd_split(split_instances, split_fraction.value_or(cfg.test_fraction), cfg.seed,
                             split_out, cfg.hash());
        if (*tb) return cmd_train_baseline(tb_train, tb_split, tb_kind, tb_per_type, tb_out, cfg);
        if (*tt) return cmd_train_tiny(tt_train, tt_split, tt_task, tt_dev, tt_out, cfg);
        if (*ev) return cmd_eval(ev_instances, ev_split, ev_models, ev_out, cfg, ev_adapter);
        if (*le) {
            if (!le_url.empty()) cfg.llm_url = le_url;
            if (!le_model.empty()) cfg.llm_model = le_model;
            if (le_shots) cfg.llm_shots = *le_shots;
            return cmd_llm_eval(le_instances, le_split, cfg, le_log, cfg.hash());
        }
        if (*rp) return cmd_report(rp_instances, rp_split, rp_preds, rp_out, rp_force, rp_adapter);
        if (*pl) {
            if (!pl_articles.empty()) cfg.articles_dir = pl_articles;
            if (!pl_reviews.empty()) cfg.reviews_dir = pl_reviews;
            if (!pl_run_dir.empty()) cfg.run_dir = pl_run_dir;
            if (cfg.articles_dir.empty() || cfg.reviews_dir.empty())
                throw robkit::validation_error(
                    "pipeline: articles/reviews directories required (flags or config)");
            return cmd_pipeline(cfg);
        }
        return 0;
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const robkit::Error& e) {
        const json err{{"error", {{"kind", static_cast<int>(e.kind())}, {"message", e.what()}}}};
        std::cerr << err.dump() << "\n";
        return static_cast<int>(e.kind());
    } catch (const std::exception& e) {
        const json err{{"error", {{"kind", 1}, {"message", e.what()}}}};
        std::cerr << err.dump() << "\n";
        return 1;
    }
}
