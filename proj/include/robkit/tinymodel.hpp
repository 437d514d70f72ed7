#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "robkit/rng.hpp"
#include "robkit/types.hpp"

// Desk-scale trainable models for the four objectives: extractive span
// prediction, answer classification, token-level generation with teacher
// forcing, and weighted binary classification on pooled decoder states, plus
// their combined sum. Parameters are plain double tensors and every gradient
// is hand-written reverse-mode over the fixed graph, so finite-difference
// verification is exact in structure (no autodiff framework in the loop).

namespace robkit::tiny {

// --- scalar loss primitives --------------------------------------------------
// Pure functions over logits; the model losses below reduce to these.

std::vector<double> softmax(const std::vector<double>& logits);

// -1/2 (log p_s[s_star] + log p_e[e_star]) for one instance.
double loss_mrc(const std::vector<double>& start_logits, const std::vector<double>& end_logits,
                int s_star, int e_star);

// Softmax cross-entropy for one instance.
double loss_ce(const std::vector<double>& logits, int gold);

// Teacher-forced token-level cross-entropy, summed over steps. The printed
// objective is a log-likelihood sum; this returns its negation so that
// minimization is the correct direction.
double loss_generative(const std::vector<std::vector<double>>& step_logits,
                       const std::vector<int>& gold_tokens);

// -[w y log sigmoid(z) + (1-y) log(1-sigmoid(z))], numerically stable.
double loss_bce(double logit, int y, double w);

// --- vocabulary and packing --------------------------------------------------

class Vocab {
public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr int kSep = 2;
    static constexpr int kBos = 3;
    static constexpr int kEos = 4;

    static Vocab build(const std::vector<std::string>& texts, std::size_t cap = 8000);

    std::size_t size() const { return tokens_.size(); }
    int id(const std::string& token) const;
    const std::string& token(int id) const { return tokens_[static_cast<std::size_t>(id)]; }
    std::vector<int> encode(const std::string& text) const;
    std::string decode(const std::vector<int>& ids) const;

    json to_json() const;
    static Vocab from_json(const json& j);

private:
    std::vector<std::string> tokens_;
    std::map<std::string, int> ids_;
};

// Question and context packed as one sequence: q_ids ++ [sep] ++ c_ids.
// Exactly one separator; context token character spans are kept so extracted
// spans detokenize to true context slices.
struct PackedSequence {
    std::vector<int> ids;
    int sep_pos = -1;
    int ctx_begin = 0;  // first context token position
    int ctx_end = 0;    // one past the last context token position
    // Character (code point) spans of context tokens within the context text.
    std::vector<std::pair<std::size_t, std::size_t>> ctx_char_spans;
};

// Throws when the packed length exceeds max_len.
PackedSequence pack_sequence(const Vocab& vocab, const std::string& question,
                             const std::string& context, int max_len);

// --- tensors and configuration -----------------------------------------------

struct Tensor {
    std::size_t rows = 0, cols = 0;
    std::vector<double> v;  // row-major values
    std::vector<double> g;  // gradient accumulator, same shape

    void init(std::size_t r, std::size_t c) {
        rows = r;
        cols = c;
        v.assign(r * c, 0.0);
        g.assign(r * c, 0.0);
    }
    double* row(std::size_t r) { return v.data() + r * cols; }
    const double* row(std::size_t r) const { return v.data() + r * cols; }
    double* grad_row(std::size_t r) { return g.data() + r * cols; }
    double& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
};

enum class Mixing { Mean, Attention };

struct TinyConfig {
    int hidden = 64;
    int layers = 2;
    int max_len = 512;
    std::size_t vocab_cap = 8000;
    Mixing mixing = Mixing::Mean;
    int max_span = 64;  // max answer span length in tokens, inclusive bound on e-s

    json to_json() const;
    static TinyConfig from_json(const json& j);
};

// --- encoder ------------------------------------------------------------------
// Embedding + position table, then `layers` residual mixing blocks:
//   mean mode:      h'_i = h_i + tanh(W1 h_i + W2 mean_j(h_j) + b)
//   attention mode: h'_i = h_i + tanh(W1 h_i + W2 attn_i + b), single-head
//                   dot-product attention with the inputs as values
// Zero parameters leave the per-position embeddings untouched. Deterministic
// given parameters; backward() accumulates into Tensor::g.

class Encoder {
public:
    void init(const TinyConfig& cfg, std::size_t vocab_size, Rng& rng);

    struct Cache {
        std::vector<int> ids;
        std::vector<std::vector<double>> layer_in;    // activations entering each layer
        std::vector<std::vector<double>> layer_tanh;  // tanh branch per layer
        std::vector<std::vector<double>> layer_out;   // residual outputs per layer
        std::vector<std::vector<double>> attn;        // attention weights per layer (L*L)
        std::vector<std::vector<double>> attn_q;      // query projections (attention mode)
        std::vector<std::vector<double>> attn_k;      // key projections (attention mode)
        std::vector<double> out;                      // final hidden states, L x H
    };

    // Returns hidden states (L x H row-major) in cache.out.
    void forward(const std::vector<int>& ids, Cache* cache) const;
    // d_out is L x H; accumulates parameter grads and returns nothing (input
    // grads terminate at the embedding tables).
    void backward(const Cache& cache, const std::vector<double>& d_out);

    void for_each_tensor(const std::function<void(Tensor&)>& fn);
    void zero_grad();

    json to_json() const;
    void load_json(const json& j, const TinyConfig& cfg);

    int hidden() const { return hidden_; }

private:
    int hidden_ = 0;
    int layers_ = 0;
    Mixing mixing_ = Mixing::Mean;
    Tensor embedding_;  // V x H
    Tensor position_;   // max_len x H
    struct Layer {
        Tensor w_self;   // H x H
        Tensor w_mix;    // H x H
        Tensor bias;     // 1 x H
        Tensor w_query;  // H x H (attention mode)
        Tensor w_key;    // H x H (attention mode)
    };
    std::vector<Layer> layers_params_;
};

// --- extractive model (span heads) ---------------------------------------------

struct SpanPrediction {
    std::vector<double> start_probs;
    std::vector<double> end_probs;
    int best_start = -1;
    int best_end = -1;
    bool valid = false;  // false = no admissible pair (empty-answer signal)
};

struct SpanExample {
    PackedSequence seq;
    int gold_start = -1;  // token positions within the packed sequence
    int gold_end = -1;
};

class ExtractiveModel {
public:
    ExtractiveModel(TinyConfig cfg, Vocab vocab, std::uint64_t seed);

    const TinyConfig& config() const { return cfg_; }
    const Vocab& vocab() const { return vocab_; }

    // Mean Eq.-1 loss over the batch; fills parameter gradients when
    // accumulate_grad is true.
    double batch_loss(const std::vector<SpanExample>& batch, bool accumulate_grad);

    // Start/end distributions plus the best admissible (s, e) pair restricted
    // to the context region with e - s <= max_span.
    SpanPrediction predict(const PackedSequence& seq) const;

    // Context slice for the predicted span; empty string when no valid pair.
    std::string extract_span(const PackedSequence& seq, const std::string& context) const;

    std::vector<double> flat_params() const;
    void set_flat_params(const std::vector<double>& flat);
    std::vector<double> flat_grads() const;
    void zero_grad();

    void save(const std::filesystem::path& path, const json& extra_header) const;
    static ExtractiveModel load(const std::filesystem::path& path);

private:
    void for_each_tensor(const std::function<void(Tensor&)>& fn);
    void for_each_tensor_const(const std::function<void(const Tensor&)>& fn) const;

    TinyConfig cfg_;
    Vocab vocab_;
    Encoder encoder_;
    Tensor start_head_;  // 1 x H
    Tensor end_head_;    // 1 x H
};

// --- answer classifier (Eq. 2 over mean-pooled encoder states) -----------------

struct ClassifyExample {
    std::vector<int> ids;
    int label = 0;  // 1 = Low RoB
};

class AnswerClassifier {
public:
    AnswerClassifier(TinyConfig cfg, Vocab vocab, std::uint64_t seed);

    const TinyConfig& config() const { return cfg_; }
    const Vocab& vocab() const { return vocab_; }

    double batch_loss(const std::vector<ClassifyExample>& batch, bool accumulate_grad);

    // P(label == 1); softmax over the two logits.
    double prob_positive(const std::vector<int>& ids) const;

    std::vector<double> flat_params() const;
    void set_flat_params(const std::vector<double>& flat);
    std::vector<double> flat_grads() const;
    void zero_grad();

    void save(const std::filesystem::path& path, const json& extra_header) const;
    static AnswerClassifier load(const std::filesystem::path& path);

private:
    void for_each_tensor(const std::function<void(Tensor&)>& fn);
    void for_each_tensor_const(const std::function<void(const Tensor&)>& fn) const;

    TinyConfig cfg_;
    Vocab vocab_;
    Encoder encoder_;
    Tensor head_w_;  // 2 x H
    Tensor head_b_;  // 1 x 2
};

// --- generative model (Eq. 3 + Eq. 4 on shared decoder states) ------------------

struct GenerativeExample {
    PackedSequence seq;          // question ++ sep ++ context
    std::vector<int> answer_ids; // target tokens, eos-terminated
    int label = 0;               // 1 = Low RoB
};

enum class GenLossPart { Generative, Bce, Total };

class GenerativeModel {
public:
    GenerativeModel(TinyConfig cfg, Vocab vocab, std::uint64_t seed);

    const TinyConfig& config() const { return cfg_; }
    const Vocab& vocab() const { return vocab_; }

    // Mean loss over the batch. Both branches run on the same forward pass;
    // `part` selects which loss contributes (Total = exact sum of the two).
    double batch_loss(const std::vector<GenerativeExample>& batch, GenLossPart part,
                      double pos_weight, bool accumulate_grad);

    // Greedy teacher-free decode, capped at max_steps tokens.
    std::vector<int> generate(const PackedSequence& seq, int max_steps) const;

    // Classification logit from mean-pooled decoder states over answer_ids.
    double classify_logit(const PackedSequence& seq, const std::vector<int>& answer_ids) const;

    std::vector<double> flat_params() const;
    void set_flat_params(const std::vector<double>& flat);
    std::vector<double> flat_grads() const;
    void zero_grad();

    void save(const std::filesystem::path& path, const json& extra_header) const;
    static GenerativeModel load(const std::filesystem::path& path);

private:
    struct DecodeCache;
    void decode_forward(const std::vector<double>& enc_out, std::size_t enc_len,
                        const std::vector<int>& answer_ids, DecodeCache* cache) const;

    void for_each_tensor(const std::function<void(Tensor&)>& fn);
    void for_each_tensor_const(const std::function<void(const Tensor&)>& fn) const;

    TinyConfig cfg_;
    Vocab vocab_;
    Encoder encoder_;
    Tensor dec_embedding_;  // V x H
    Tensor dec_position_;   // max_len x H
    Tensor dec_w_query_;    // H x H
    Tensor dec_w_in_;       // H x H
    Tensor dec_w_att_;      // H x H
    Tensor dec_bias_;       // 1 x H
    Tensor out_w_;          // V x H
    Tensor out_b_;          // 1 x V
    Tensor cls_w_;          // 1 x H
    Tensor cls_b_;          // 1 x 1
};

// --- training -------------------------------------------------------------------

struct TrainOptions {
    int epochs = 10;
    int batch_size = 8;
    int grad_accum = 1;
    double lr = 2e-3;  // checkpoint-scale runs used 1e-5..5e-5; scaled up here
    double weight_decay = 0.01;
    bool cosine_decay = true;
    std::uint64_t seed = 1;
};

struct TrainReport {
    std::vector<double> epoch_losses;
};

// AdamW over the flat parameter vector with optional cosine decay.
// Deterministic given the seed. Throws on non-finite loss with diagnostics.
class AdamW {
public:
    AdamW(std::size_t dim, double lr, double weight_decay);
    void step(std::vector<double>& params, const std::vector<double>& grads, double lr_scale);

private:
    double lr_, weight_decay_;
    double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
    long t_ = 0;
    std::vector<double> m_, v_;
};

// Builds span examples from instances; instances whose answers do not align
// with token boundaries are skipped (counted in *skipped).
std::vector<SpanExample> make_span_examples(const Vocab& vocab, const std::vector<Instance>& instances,
                                            int max_len, std::size_t* skipped = nullptr);

std::vector<GenerativeExample> make_generative_examples(const Vocab& vocab,
                                                        const std::vector<Instance>& instances,
                                                        int max_len);

TrainReport train_extractive(ExtractiveModel& model, const std::vector<SpanExample>& data,
                             const TrainOptions& opts);
TrainReport train_classifier(AnswerClassifier& model, const std::vector<ClassifyExample>& data,
                             const TrainOptions& opts);
TrainReport train_generative(GenerativeModel& model, const std::vector<GenerativeExample>& data,
                             const TrainOptions& opts, double pos_weight);

}  // namespace robkit::tiny
