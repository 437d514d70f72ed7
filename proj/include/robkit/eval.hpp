#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "robkit/types.hpp"

namespace robkit::eval {

// SQuAD-style answer normalization: lowercase, punctuation to spaces, drop
// the articles a/an/the, split on whitespace.
std::vector<std::string> normalize_answer(const std::string& text);

struct SpanScore {
    double f1 = 0.0;
    int em = 0;
};

// Token-overlap F1 (multiset) and exact match over normalized answers.
// Both empty -> (1, 1); exactly one empty -> (0, 0).
SpanScore span_f1_em(const std::string& pred, const std::string& gold);

struct Confusion {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    std::size_t total() const { return tp + fp + fn + tn; }
};

struct MacroPrf {
    double precision = 0.0;
    double recall = 0.0;
    double macro_f1 = 0.0;
    Confusion confusion;
    std::vector<std::string> warnings;  // empty-class precision/recall fell back to 0
};

// Unweighted two-class macro average; positive class is Low RoB.
MacroPrf macro_prf(const std::vector<int>& labels, const std::vector<int>& preds);

// Rank-statistic ROC AUC with tie handling: P(score_pos > score_neg) + ties/2.
// Throws a validation error when only one class is present.
double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
};

// Threshold sweep for plotting; includes the (0,0) and (1,1) endpoints.
std::vector<RocPoint> roc_curve(const std::vector<double>& scores, const std::vector<int>& labels);

struct WelchResult {
    double t = 0.0;
    double df = 0.0;
    double p = 1.0;  // two-sided
    bool significant = false;  // p < 0.05
};

// Welch two-sample t-test with Welch-Satterthwaite degrees of freedom;
// two-sided p from the regularized incomplete beta function.
// Requires size >= 2 per sample and nonzero variance in at least one.
WelchResult welch_t_test(const std::vector<double>& sample_a, const std::vector<double>& sample_b);

// Regularized incomplete beta I_x(a, b); exposed for the test oracle.
double reg_incomplete_beta(double a, double b, double x);

// ---------------------------------------------------------------------------

struct Prediction {
    std::string id;
    std::string model;
    std::string answer_text;          // extracted/generated evidence
    double score = 0.5;               // higher = more confidently Low RoB
    std::optional<Label> label;       // defaults to score >= 0.5 when absent
};

// Hook point for an embedding-similarity span metric. Nothing in the shipped
// pipeline registers a scorer; token-level F1/EM are the supported metrics.
// A contextual-embedding scorer can slot in here and its block average shows
// up as an extra "span_sim" row without touching report assembly.
using SpanSimilarityHook = std::function<double(const std::string& pred, const std::string& gold)>;
void set_span_similarity_hook(SpanSimilarityHook hook);  // empty hook clears

struct BlockMetrics {
    std::size_t n = 0;
    double span_f1 = 0.0;
    double span_em = 0.0;
    std::optional<double> span_sim;  // only when a similarity hook is registered
    double precision = 0.0;
    double recall = 0.0;
    double macro_f1 = 0.0;
    std::optional<double> auc;  // absent when a class is missing
    Confusion confusion;
};

struct EvalReport {
    // model -> block name ("overall" or bias type) -> metrics
    std::map<std::string, std::map<std::string, BlockMetrics>> blocks;
    // model -> instance ids that had no prediction (listed, excluded, counted)
    std::map<std::string, std::vector<std::string>> missing;
    std::map<std::string, std::vector<RocPoint>> roc_points;  // overall curves
    std::vector<std::string> warnings;
};

// Joins predictions with instances by id and assembles per-bias-type blocks
// plus an overall block computed over all instances jointly (not the mean of
// the per-type blocks). Prediction ids not present in the instances are a
// validation error.
EvalReport build_report(const std::vector<Prediction>& predictions,
                        const std::vector<Instance>& instances);

std::string report_to_csv(const EvalReport& report);        // bias_type,metric,model,value
std::string roc_points_to_csv(const EvalReport& report);    // model,fpr,tpr
std::string report_to_markdown(const EvalReport& report);

void write_report_files(const EvalReport& report, const std::filesystem::path& out_dir);

std::vector<Prediction> read_predictions_jsonl(const std::filesystem::path& path);
void write_predictions_jsonl(const std::filesystem::path& path,
                             const std::vector<Prediction>& predictions);

}  // namespace robkit::eval
