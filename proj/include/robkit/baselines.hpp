#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "robkit/types.hpp"

namespace robkit::baselines {

// Sparse design matrix: per-row sorted (column, value) pairs.
using SparseRow = std::vector<std::pair<std::uint32_t, double>>;

struct SparseMatrix {
    std::vector<SparseRow> rows;
    std::size_t dim = 0;
};

struct FeaturizerConfig {
    int max_n = 3;           // [1,2,3]-grams
    std::size_t top_k = 1000;
};

// Tf-idf featurizer over the K most frequent [1..max_n]-grams. Vocabulary
// selection breaks frequency ties lexicographically; columns are sorted
// lexicographically. Transform of unseen text uses only the fitted
// vocabulary. Rows are L2-normalized.
class NgramFeaturizer {
public:
    static NgramFeaturizer fit(const std::vector<std::string>& texts, FeaturizerConfig cfg = {});

    SparseRow transform(const std::string& text) const;
    SparseMatrix transform_batch(const std::vector<std::string>& texts) const;

    bool fitted() const { return fitted_; }
    std::size_t dim() const { return vocabulary_.size(); }
    const std::vector<std::string>& vocabulary() const { return vocabulary_; }
    const std::vector<double>& idf() const { return idf_; }
    // Raw corpus frequency of each kept gram; oracle/test support.
    const std::vector<std::uint64_t>& frequencies() const { return freq_; }

    json to_json() const;
    static NgramFeaturizer from_json(const json& j);

private:
    std::vector<std::string> vocabulary_;  // sorted lexicographically
    std::vector<double> idf_;
    std::vector<std::uint64_t> freq_;
    int max_n_ = 3;
    bool fitted_ = false;
};

// The instance text the baselines consume: question ++ " " ++ answer.
std::string instance_text(const Instance& inst);

enum class ModelKind { Logistic, Hinge };

struct LinearModel {
    ModelKind kind = ModelKind::Logistic;
    std::vector<double> weights;
    double bias = 0.0;
    double class_weight_pos = 1.0;

    double decision(const SparseRow& row) const;  // w.x + b
    // Logistic: sigmoid(decision) in (0,1). Hinge: raw margin.
    double score(const SparseRow& row) const;
    int predict(const SparseRow& row, double threshold = 0.5) const;

    std::vector<double> scores(const SparseMatrix& x) const;
    std::vector<int> predictions(const SparseMatrix& x, double threshold = 0.5) const;

    void save(const std::filesystem::path& path, const json& extra_header) const;
    static LinearModel load(const std::filesystem::path& path, json* header_out = nullptr);
    static constexpr std::uint32_t kFormatVersion = 1;
};

struct TrainConfig {
    double l2 = 1e-3;       // logistic ridge strength
    double c = 1.0;         // SVM soft-margin constant (larger = less regularized)
    int epochs = 200;
    double lr = 0.5;
    double lr_decay = 0.02; // lr_t = lr / (1 + decay * epoch)
    std::uint64_t seed = 1;
    double class_weight_pos = 0.0;  // <= 0 means auto N_neg/N_pos
};

// Full-batch objective and gradient; the finite-difference oracle checks
// these directly.
//   logistic: mean weighted cross-entropy + l2/2 * ||w||^2
//   hinge:    mean weighted max(0, 1 - y_pm * s) + ||w||^2 / (2c)
double logreg_objective(const SparseMatrix& x, const std::vector<int>& y,
                        const std::vector<double>& w, double b, double l2,
                        double class_weight_pos, std::vector<double>* grad_w = nullptr,
                        double* grad_b = nullptr);
double svm_objective(const SparseMatrix& x, const std::vector<int>& y,
                     const std::vector<double>& w, double b, double c, double class_weight_pos,
                     std::vector<double>* grad_w = nullptr, double* grad_b = nullptr);

// Seeded SGD with a fixed shuffle schedule; deterministic bit-for-bit for a
// given seed. Throws on divergence (NaN loss) advising a smaller lr.
LinearModel train_logreg(const SparseMatrix& x, const std::vector<int>& y, TrainConfig cfg);
LinearModel train_svm(const SparseMatrix& x, const std::vector<int>& y, TrainConfig cfg);

}  // namespace robkit::baselines
