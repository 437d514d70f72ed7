#include "robkit/baselines.hpp"

#include "robkit/binio.hpp"
#include "robkit/error.hpp"
#include "robkit/kernels.hpp"
#include "robkit/rng.hpp"
#include "robkit/tokenize.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace robkit::baselines {

std::string instance_text(const Instance& inst) { return inst.question + " " + inst.answer_text; }

NgramFeaturizer NgramFeaturizer::fit(const std::vector<std::string>& texts, FeaturizerConfig cfg) {
    if (texts.empty()) throw validation_error("featurizer fit: empty corpus");

    std::map<std::string, std::uint64_t> counts;  // total corpus frequency
    std::map<std::string, std::uint64_t> df;      // document frequency
    for (const auto& text : texts) {
        const auto grams = ngrams(tokenize(text), cfg.max_n);
        for (const auto& g : grams) ++counts[g];
        std::vector<std::string> uniq(grams);
        std::sort(uniq.begin(), uniq.end());
        uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
        for (const auto& g : uniq) ++df[g];
    }
    if (counts.empty()) throw validation_error("featurizer fit: corpus has no tokens");

    // Top-K by frequency; ties keep the lexicographically smallest gram.
    // counts is already sorted by gram, so a stable sort on frequency alone
    // preserves that order within ties.
    std::vector<std::pair<std::string, std::uint64_t>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    if (ranked.size() > cfg.top_k) ranked.resize(cfg.top_k);
    std::sort(ranked.begin(), ranked.end());  // columns sorted lexicographically

    NgramFeaturizer f;
    f.max_n_ = cfg.max_n;
    f.fitted_ = true;
    const double n_docs = static_cast<double>(texts.size());
    for (const auto& [gram, count] : ranked) {
        f.vocabulary_.push_back(gram);
        f.freq_.push_back(count);
        f.idf_.push_back(std::log((1.0 + n_docs) / (1.0 + static_cast<double>(df[gram]))) + 1.0);
    }
    return f;
}

SparseRow NgramFeaturizer::transform(const std::string& text) const {
    if (!fitted_) throw validation_error("featurizer transform: not fitted");
    std::map<std::uint32_t, double> tf;
    for (const auto& g : ngrams(tokenize(text), max_n_)) {
        auto it = std::lower_bound(vocabulary_.begin(), vocabulary_.end(), g);
        if (it != vocabulary_.end() && *it == g)
            tf[static_cast<std::uint32_t>(it - vocabulary_.begin())] += 1.0;
    }
    SparseRow row;
    row.reserve(tf.size());
    double norm_sq = 0.0;
    for (const auto& [col, count] : tf) {
        const double w = count * idf_[col];
        row.emplace_back(col, w);
        norm_sq += w * w;
    }
    if (norm_sq > 0.0) {
        const double inv = 1.0 / std::sqrt(norm_sq);
        for (auto& [col, w] : row) w *= inv;
    }
    return row;
}

SparseMatrix NgramFeaturizer::transform_batch(const std::vector<std::string>& texts) const {
    SparseMatrix x;
    x.dim = dim();
    x.rows.reserve(texts.size());
    for (const auto& t : texts) x.rows.push_back(transform(t));
    return x;
}

json NgramFeaturizer::to_json() const {
    return json{{"max_n", max_n_},
                {"vocabulary", vocabulary_},
                {"idf", idf_},
                {"frequency", freq_}};
}

NgramFeaturizer NgramFeaturizer::from_json(const json& j) {
    NgramFeaturizer f;
    f.max_n_ = j.at("max_n").get<int>();
    f.vocabulary_ = j.at("vocabulary").get<std::vector<std::string>>();
    f.idf_ = j.at("idf").get<std::vector<double>>();
    if (j.contains("frequency")) f.freq_ = j["frequency"].get<std::vector<std::uint64_t>>();
    f.fitted_ = true;
    return f;
}

// --- Linear models -----------------------------------------------------------

namespace {

double stable_sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// log(1 + e^z) without overflow.
double log1pexp(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

void check_dim(const SparseRow& row, std::size_t dim) {
    for (const auto& [col, _] : row)
        if (col >= dim)
            throw validation_error("feature column " + std::to_string(col) +
                                   " out of range for model dimension " + std::to_string(dim));
}

double resolve_pos_weight(const std::vector<int>& y, double requested) {
    if (requested > 0.0) return requested;
    const std::size_t n_pos = static_cast<std::size_t>(std::count(y.begin(), y.end(), 1));
    const std::size_t n_neg = y.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) return 1.0;
    return static_cast<double>(n_neg) / static_cast<double>(n_pos);
}

}  // namespace

double LinearModel::decision(const SparseRow& row) const {
    check_dim(row, weights.size());
    double s = bias;
    for (const auto& [col, v] : row) s += weights[col] * v;
    return s;
}

double LinearModel::score(const SparseRow& row) const {
    const double s = decision(row);
    return kind == ModelKind::Logistic ? stable_sigmoid(s) : s;
}

int LinearModel::predict(const SparseRow& row, double threshold) const {
    if (kind == ModelKind::Logistic) return score(row) >= threshold ? 1 : 0;
    return decision(row) >= 0.0 ? 1 : 0;
}

std::vector<double> LinearModel::scores(const SparseMatrix& x) const {
    std::vector<double> out;
    out.reserve(x.rows.size());
    for (const auto& row : x.rows) out.push_back(score(row));
    return out;
}

std::vector<int> LinearModel::predictions(const SparseMatrix& x, double threshold) const {
    std::vector<int> out;
    out.reserve(x.rows.size());
    for (const auto& row : x.rows) out.push_back(predict(row, threshold));
    return out;
}

double logreg_objective(const SparseMatrix& x, const std::vector<int>& y,
                        const std::vector<double>& w, double b, double l2,
                        double class_weight_pos, std::vector<double>* grad_w, double* grad_b) {
    const std::size_t n = x.rows.size();
    if (n == 0) throw validation_error("logreg objective: empty design matrix");
    if (grad_w) grad_w->assign(w.size(), 0.0);
    if (grad_b) *grad_b = 0.0;

    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        check_dim(x.rows[i], w.size());
        double s = b;
        for (const auto& [col, v] : x.rows[i]) s += w[col] * v;
        const double weight = y[i] == 1 ? class_weight_pos : 1.0;
        // CE written as log1pexp for stability: -y*s + log(1+e^s).
        loss += weight * (log1pexp(s) - (y[i] == 1 ? s : 0.0));
        if (grad_w) {
            const double g = weight * (stable_sigmoid(s) - (y[i] == 1 ? 1.0 : 0.0));
            for (const auto& [col, v] : x.rows[i]) (*grad_w)[col] += g * v;
            *grad_b += g;
        }
    }
    loss /= static_cast<double>(n);
    if (grad_w) {
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t j = 0; j < w.size(); ++j) (*grad_w)[j] = (*grad_w)[j] * inv_n + l2 * w[j];
        *grad_b *= inv_n;
    }
    loss += 0.5 * l2 * kernels::l2_norm_sq({w.data(), w.size()});
    return loss;
}

double svm_objective(const SparseMatrix& x, const std::vector<int>& y,
                     const std::vector<double>& w, double b, double c, double class_weight_pos,
                     std::vector<double>* grad_w, double* grad_b) {
    const std::size_t n = x.rows.size();
    if (n == 0) throw validation_error("svm objective: empty design matrix");
    if (c <= 0.0) throw validation_error("svm objective: c must be positive");
    if (grad_w) grad_w->assign(w.size(), 0.0);
    if (grad_b) *grad_b = 0.0;

    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        check_dim(x.rows[i], w.size());
        double s = b;
        for (const auto& [col, v] : x.rows[i]) s += w[col] * v;
        const double ypm = y[i] == 1 ? 1.0 : -1.0;
        const double weight = y[i] == 1 ? class_weight_pos : 1.0;
        const double margin = 1.0 - ypm * s;
        if (margin > 0.0) {
            loss += weight * margin;
            if (grad_w) {
                const double g = -weight * ypm;
                for (const auto& [col, v] : x.rows[i]) (*grad_w)[col] += g * v;
                *grad_b += g;
            }
        }
    }
    loss /= static_cast<double>(n);
    if (grad_w) {
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t j = 0; j < w.size(); ++j)
            (*grad_w)[j] = (*grad_w)[j] * inv_n + w[j] / c;
        *grad_b *= inv_n;
    }
    loss += kernels::l2_norm_sq({w.data(), w.size()}) / (2.0 * c);
    return loss;
}

namespace {

LinearModel train_sgd(const SparseMatrix& x, const std::vector<int>& y, TrainConfig cfg,
                      ModelKind kind) {
    if (x.rows.empty()) throw validation_error("train: empty design matrix");
    if (x.rows.size() != y.size())
        throw validation_error("train: labels and rows differ in length");
    for (int label : y)
        if (label != 0 && label != 1) throw validation_error("train: labels must be 0/1");

    LinearModel model;
    model.kind = kind;
    model.weights.assign(x.dim, 0.0);
    model.bias = 0.0;
    model.class_weight_pos = resolve_pos_weight(y, cfg.class_weight_pos);

    const std::size_t n = x.rows.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(cfg.seed);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        const double lr = cfg.lr / (1.0 + cfg.lr_decay * static_cast<double>(epoch));
        double epoch_loss = 0.0;
        for (std::size_t idx : order) {
            const SparseRow& row = x.rows[idx];
            double s = model.bias;
            for (const auto& [col, v] : row) s += model.weights[col] * v;
            const double weight = y[idx] == 1 ? model.class_weight_pos : 1.0;

            double g = 0.0;  // d(loss_i)/d(s)
            double reg = 0.0;
            if (kind == ModelKind::Logistic) {
                g = weight * (stable_sigmoid(s) - (y[idx] == 1 ? 1.0 : 0.0));
                reg = cfg.l2;
                epoch_loss += weight * (log1pexp(s) - (y[idx] == 1 ? s : 0.0));
            } else {
                const double ypm = y[idx] == 1 ? 1.0 : -1.0;
                const double margin = 1.0 - ypm * s;
                if (margin > 0.0) {
                    g = -weight * ypm;
                    epoch_loss += weight * margin;
                }
                reg = 1.0 / (cfg.c * static_cast<double>(n));
            }
            // L2 shrinkage applied as its own step; touching only the active
            // columns would bias the regularizer toward dense features.
            if (reg > 0.0) {
                const double shrink = 1.0 - lr * reg;
                if (shrink > 0.0)
                    kernels::scale({model.weights.data(), model.weights.size()}, shrink);
                else
                    std::fill(model.weights.begin(), model.weights.end(), 0.0);
            }
            if (g != 0.0) {
                for (const auto& [col, v] : row) model.weights[col] -= lr * g * v;
                model.bias -= lr * g;
            }
        }

        double probe = model.bias;
        for (double wj : model.weights) probe += wj;
        if (!std::isfinite(epoch_loss) || !std::isfinite(probe))
            throw validation_error("training diverged (non-finite loss); lower the learning rate");
    }
    return model;
}

constexpr char kModelMagic[4] = {'R', 'K', 'L', 'M'};

}  // namespace

LinearModel train_logreg(const SparseMatrix& x, const std::vector<int>& y, TrainConfig cfg) {
    return train_sgd(x, y, cfg, ModelKind::Logistic);
}

LinearModel train_svm(const SparseMatrix& x, const std::vector<int>& y, TrainConfig cfg) {
    return train_sgd(x, y, cfg, ModelKind::Hinge);
}

void LinearModel::save(const std::filesystem::path& path, const json& extra_header) const {
    json header = extra_header;
    header["kind"] = kind == ModelKind::Logistic ? "lr" : "svm";
    header["dim"] = weights.size();
    header["class_weight_pos"] = class_weight_pos;
    binio::Writer w(path, kModelMagic, kFormatVersion, header);
    w.put_doubles(weights);
    w.put_double(bias);
    w.finish();
}

LinearModel LinearModel::load(const std::filesystem::path& path, json* header_out) {
    binio::Reader r(path, kModelMagic, kFormatVersion);
    LinearModel m;
    const std::string kind = r.header().value("kind", "lr");
    m.kind = kind == "svm" ? ModelKind::Hinge : ModelKind::Logistic;
    m.class_weight_pos = r.header().value("class_weight_pos", 1.0);
    m.weights = r.get_doubles();
    m.bias = r.get_double();
    if (header_out) *header_out = r.header();
    return m;
}

}  // namespace robkit::baselines
