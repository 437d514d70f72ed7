#include "robkit/tinymodel.hpp"

#include "robkit/binio.hpp"
#include "robkit/error.hpp"
#include "robkit/kernels.hpp"
#include "robkit/tokenize.hpp"
#include "robkit/utf8.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace robkit::tiny {

// --- scalar loss primitives ----------------------------------------------------

std::vector<double> softmax(const std::vector<double>& logits) {
    const double m = kernels::max_value({logits.data(), logits.size()});
    std::vector<double> p(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - m);
        z += p[i];
    }
    for (auto& v : p) v /= z;
    return p;
}

namespace {

double log_softmax_at(const std::vector<double>& logits, std::size_t idx) {
    const double m = kernels::max_value({logits.data(), logits.size()});
    double z = 0.0;
    for (double v : logits) z += std::exp(v - m);
    return logits[idx] - m - std::log(z);
}

double log1pexp(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

}  // namespace

double loss_mrc(const std::vector<double>& start_logits, const std::vector<double>& end_logits,
                int s_star, int e_star) {
    if (s_star < 0 || static_cast<std::size_t>(s_star) >= start_logits.size() || e_star < 0 ||
        static_cast<std::size_t>(e_star) >= end_logits.size())
        throw validation_error("loss_mrc: gold position out of range");
    return -0.5 * (log_softmax_at(start_logits, static_cast<std::size_t>(s_star)) +
                   log_softmax_at(end_logits, static_cast<std::size_t>(e_star)));
}

double loss_ce(const std::vector<double>& logits, int gold) {
    if (gold < 0 || static_cast<std::size_t>(gold) >= logits.size())
        throw validation_error("loss_ce: gold class out of range");
    return -log_softmax_at(logits, static_cast<std::size_t>(gold));
}

double loss_generative(const std::vector<std::vector<double>>& step_logits,
                       const std::vector<int>& gold_tokens) {
    if (step_logits.size() != gold_tokens.size())
        throw validation_error("loss_generative: step count must equal gold length");
    double loss = 0.0;
    for (std::size_t t = 0; t < gold_tokens.size(); ++t) {
        const int y = gold_tokens[t];
        if (y < 0 || static_cast<std::size_t>(y) >= step_logits[t].size())
            throw validation_error("loss_generative: gold token id out of range");
        loss -= log_softmax_at(step_logits[t], static_cast<std::size_t>(y));
    }
    return loss;
}

double loss_bce(double logit, int y, double w) {
    if (y != 0 && y != 1) throw validation_error("loss_bce: label must be 0 or 1");
    if (w <= 0.0) throw validation_error("loss_bce: positive-class weight must be > 0");
    // -[w y log s(z) + (1-y) log(1-s(z))] in log1pexp form.
    return y == 1 ? w * log1pexp(-logit) : log1pexp(logit);
}

// --- vocabulary ------------------------------------------------------------------

Vocab Vocab::build(const std::vector<std::string>& texts, std::size_t cap) {
    std::map<std::string, std::uint64_t> counts;
    for (const auto& text : texts)
        for (const auto& tok : tokenize(text)) ++counts[tok];

    std::vector<std::pair<std::string, std::uint64_t>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    if (ranked.size() > cap) ranked.resize(cap);
    std::sort(ranked.begin(), ranked.end());

    Vocab v;
    v.tokens_ = {"<pad>", "<unk>", "<sep>", "<bos>", "<eos>"};
    for (const auto& [tok, _] : ranked) v.tokens_.push_back(tok);
    for (std::size_t i = 0; i < v.tokens_.size(); ++i) v.ids_[v.tokens_[i]] = static_cast<int>(i);
    return v;
}

int Vocab::id(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? kUnk : it->second;
}

std::vector<int> Vocab::encode(const std::string& text) const {
    std::vector<int> ids;
    for (const auto& tok : tokenize(text)) ids.push_back(id(tok));
    return ids;
}

std::string Vocab::decode(const std::vector<int>& ids) const {
    std::string out;
    for (int i : ids) {
        if (i <= kEos) continue;  // specials dropped
        if (!out.empty()) out += ' ';
        out += token(i);
    }
    return out;
}

json Vocab::to_json() const { return json{{"tokens", tokens_}}; }

Vocab Vocab::from_json(const json& j) {
    Vocab v;
    v.tokens_ = j.at("tokens").get<std::vector<std::string>>();
    for (std::size_t i = 0; i < v.tokens_.size(); ++i) v.ids_[v.tokens_[i]] = static_cast<int>(i);
    return v;
}

PackedSequence pack_sequence(const Vocab& vocab, const std::string& question,
                             const std::string& context, int max_len) {
    PackedSequence seq;
    seq.ids = vocab.encode(question);
    seq.sep_pos = static_cast<int>(seq.ids.size());
    seq.ids.push_back(Vocab::kSep);
    seq.ctx_begin = static_cast<int>(seq.ids.size());
    for (const auto& span : tokenize_spans(context)) {
        seq.ids.push_back(vocab.id(span.text));
        seq.ctx_char_spans.emplace_back(span.start, span.end);
    }
    seq.ctx_end = static_cast<int>(seq.ids.size());
    if (seq.ids.size() > static_cast<std::size_t>(max_len))
        throw validation_error("packed sequence length " + std::to_string(seq.ids.size()) +
                               " exceeds max_len " + std::to_string(max_len));
    return seq;
}

// --- config ----------------------------------------------------------------------

json TinyConfig::to_json() const {
    return json{{"hidden", hidden},   {"layers", layers},
                {"max_len", max_len}, {"vocab_cap", vocab_cap},
                {"mixing", mixing == Mixing::Mean ? "mean" : "attention"},
                {"max_span", max_span}};
}

TinyConfig TinyConfig::from_json(const json& j) {
    TinyConfig cfg;
    cfg.hidden = j.value("hidden", 64);
    cfg.layers = j.value("layers", 2);
    cfg.max_len = j.value("max_len", 512);
    cfg.vocab_cap = j.value("vocab_cap", std::size_t{8000});
    cfg.mixing = j.value("mixing", "mean") == std::string("attention") ? Mixing::Attention : Mixing::Mean;
    cfg.max_span = j.value("max_span", 64);
    return cfg;
}

// --- tensor helpers ---------------------------------------------------------------

namespace {

void init_tensor(Tensor& t, std::size_t rows, std::size_t cols, Rng& rng, double scale) {
    t.init(rows, cols);
    if (scale > 0.0)
        for (auto& v : t.v) v = rng.normal() * scale;
}

// y += W x  (W rows x cols, x cols, y rows)
void matvec_acc(const Tensor& w, const double* x, double* y) {
    for (std::size_t r = 0; r < w.rows; ++r) y[r] += kernels::dot({w.row(r), w.cols}, {x, w.cols});
}

// Backward of y = W x: dW += dy (x)T, dx += W^T dy.
void matvec_backward(Tensor& w, const double* x, const double* dy, double* dx) {
    for (std::size_t r = 0; r < w.rows; ++r) {
        kernels::axpy(dy[r], {x, w.cols}, {w.grad_row(r), w.cols});
        if (dx) kernels::axpy(dy[r], {w.row(r), w.cols}, {dx, w.cols});
    }
}

json tensor_to_json(const Tensor& t) {
    return json{{"rows", t.rows}, {"cols", t.cols}, {"v", t.v}};
}

Tensor tensor_from_json(const json& j) {
    Tensor t;
    t.init(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
    t.v = j.at("v").get<std::vector<double>>();
    if (t.v.size() != t.rows * t.cols) throw validation_error("tensor payload shape mismatch");
    return t;
}

}  // namespace

// --- encoder -----------------------------------------------------------------------

void Encoder::init(const TinyConfig& cfg, std::size_t vocab_size, Rng& rng) {
    hidden_ = cfg.hidden;
    layers_ = cfg.layers;
    mixing_ = cfg.mixing;
    const std::size_t h = static_cast<std::size_t>(hidden_);
    init_tensor(embedding_, vocab_size, h, rng, 0.1);
    init_tensor(position_, static_cast<std::size_t>(cfg.max_len), h, rng, 0.1);
    layers_params_.resize(static_cast<std::size_t>(layers_));
    for (auto& layer : layers_params_) {
        init_tensor(layer.w_self, h, h, rng, 0.08);
        init_tensor(layer.w_mix, h, h, rng, 0.08);
        init_tensor(layer.bias, 1, h, rng, 0.0);
        if (mixing_ == Mixing::Attention) {
            init_tensor(layer.w_query, h, h, rng, 0.08);
            init_tensor(layer.w_key, h, h, rng, 0.08);
        }
    }
}

void Encoder::forward(const std::vector<int>& ids, Cache* cache) const {
    const std::size_t len = ids.size();
    const std::size_t h = static_cast<std::size_t>(hidden_);
    if (len == 0) throw validation_error("encoder: empty sequence");
    if (len > position_.rows)
        throw validation_error("encoder: sequence length " + std::to_string(len) +
                               " exceeds max_len " + std::to_string(position_.rows));

    cache->ids = ids;
    cache->layer_in.clear();
    cache->layer_tanh.clear();
    cache->layer_out.clear();
    cache->attn.clear();
    cache->attn_q.clear();
    cache->attn_k.clear();

    std::vector<double> x(len * h);
    for (std::size_t i = 0; i < len; ++i) {
        const double* e = embedding_.row(static_cast<std::size_t>(ids[i]));
        const double* p = position_.row(i);
        for (std::size_t k = 0; k < h; ++k) x[i * h + k] = e[k] + p[k];
    }

    const double inv_sqrt_h = 1.0 / std::sqrt(static_cast<double>(h));
    for (const auto& layer : layers_params_) {
        cache->layer_in.push_back(x);
        std::vector<double> mixed(len * h, 0.0);
        std::vector<double> attn;
        if (mixing_ == Mixing::Mean) {
            std::vector<double> mean(h, 0.0);
            for (std::size_t i = 0; i < len; ++i)
                kernels::axpy(1.0, {x.data() + i * h, h}, {mean.data(), h});
            kernels::scale({mean.data(), h}, 1.0 / static_cast<double>(len));
            for (std::size_t i = 0; i < len; ++i) std::copy(mean.begin(), mean.end(), mixed.begin() + i * h);
        } else {
            // Single-head dot-product attention; values are the inputs.
            std::vector<double> q(len * h, 0.0), kproj(len * h, 0.0);
            for (std::size_t i = 0; i < len; ++i) {
                matvec_acc(layer.w_query, x.data() + i * h, q.data() + i * h);
                matvec_acc(layer.w_key, x.data() + i * h, kproj.data() + i * h);
            }
            attn.assign(len * len, 0.0);
            for (std::size_t i = 0; i < len; ++i) {
                std::vector<double> scores(len);
                for (std::size_t j = 0; j < len; ++j)
                    scores[j] = kernels::dot({q.data() + i * h, h}, {kproj.data() + j * h, h}) *
                                inv_sqrt_h;
                const auto a = softmax(scores);
                std::copy(a.begin(), a.end(), attn.begin() + i * len);
                for (std::size_t j = 0; j < len; ++j)
                    kernels::axpy(a[j], {x.data() + j * h, h}, {mixed.data() + i * h, h});
            }
            cache->attn_q.push_back(std::move(q));
            cache->attn_k.push_back(std::move(kproj));
        }
        cache->attn.push_back(std::move(attn));

        // Residual block: y_i = x_i + tanh(W_self x_i + W_mix mixed_i + b).
        std::vector<double> t(len * h, 0.0);
        for (std::size_t i = 0; i < len; ++i) {
            double* ti = t.data() + i * h;
            std::copy(layer.bias.row(0), layer.bias.row(0) + h, ti);
            matvec_acc(layer.w_self, x.data() + i * h, ti);
            matvec_acc(layer.w_mix, mixed.data() + i * h, ti);
            for (std::size_t k = 0; k < h; ++k) ti[k] = std::tanh(ti[k]);
        }
        cache->layer_tanh.push_back(t);
        std::vector<double> y(len * h);
        for (std::size_t i = 0; i < len * h; ++i) y[i] = x[i] + t[i];
        cache->layer_out.push_back(y);
        x = std::move(y);
    }
    cache->out = x;
}

void Encoder::backward(const Cache& cache, const std::vector<double>& d_out) {
    const std::size_t len = cache.ids.size();
    const std::size_t h = static_cast<std::size_t>(hidden_);
    const double inv_sqrt_h = 1.0 / std::sqrt(static_cast<double>(h));

    std::vector<double> d = d_out;
    for (std::size_t li = layers_params_.size(); li-- > 0;) {
        auto& layer = layers_params_[li];
        const auto& x = cache.layer_in[li];
        const auto& t = cache.layer_tanh[li];

        // Through tanh; the residual path adds d straight to dx below.
        std::vector<double> dz(len * h);
        for (std::size_t i = 0; i < len * h; ++i) dz[i] = d[i] * (1.0 - t[i] * t[i]);

        std::vector<double> dx = d;  // residual connection

        // Recompute the mixed input (cheap relative to caching it).
        std::vector<double> mixed(len * h, 0.0);
        if (mixing_ == Mixing::Mean) {
            std::vector<double> mean(h, 0.0);
            for (std::size_t i = 0; i < len; ++i)
                kernels::axpy(1.0, {x.data() + i * h, h}, {mean.data(), h});
            kernels::scale({mean.data(), h}, 1.0 / static_cast<double>(len));
            for (std::size_t i = 0; i < len; ++i)
                std::copy(mean.begin(), mean.end(), mixed.begin() + i * h);
        } else {
            const auto& attn = cache.attn[li];
            for (std::size_t i = 0; i < len; ++i)
                for (std::size_t j = 0; j < len; ++j)
                    kernels::axpy(attn[i * len + j], {x.data() + j * h, h},
                                  {mixed.data() + i * h, h});
        }

        std::vector<double> dmixed(len * h, 0.0);
        for (std::size_t i = 0; i < len; ++i) {
            matvec_backward(layer.w_self, x.data() + i * h, dz.data() + i * h, dx.data() + i * h);
            matvec_backward(layer.w_mix, mixed.data() + i * h, dz.data() + i * h,
                            dmixed.data() + i * h);
            kernels::axpy(1.0, {dz.data() + i * h, h}, {layer.bias.grad_row(0), h});
        }

        if (mixing_ == Mixing::Mean) {
            // mixed_i = mean_j x_j for every i: fold all dmixed back evenly.
            std::vector<double> dmean(h, 0.0);
            for (std::size_t i = 0; i < len; ++i)
                kernels::axpy(1.0, {dmixed.data() + i * h, h}, {dmean.data(), h});
            kernels::scale({dmean.data(), h}, 1.0 / static_cast<double>(len));
            for (std::size_t i = 0; i < len; ++i)
                kernels::axpy(1.0, {dmean.data(), h}, {dx.data() + i * h, h});
        } else {
            const auto& attn = cache.attn[li];
            const auto& q = cache.attn_q[li];
            const auto& kproj = cache.attn_k[li];
            std::vector<double> dq(len * h, 0.0), dk(len * h, 0.0);
            for (std::size_t i = 0; i < len; ++i) {
                // d alpha_ij = dmixed_i . x_j ; values feed dx directly.
                std::vector<double> dalpha(len);
                for (std::size_t j = 0; j < len; ++j) {
                    dalpha[j] = kernels::dot({dmixed.data() + i * h, h}, {x.data() + j * h, h});
                    kernels::axpy(attn[i * len + j], {dmixed.data() + i * h, h},
                                  {dx.data() + j * h, h});
                }
                // Softmax backward on row i.
                double dot_ad = 0.0;
                for (std::size_t j = 0; j < len; ++j) dot_ad += attn[i * len + j] * dalpha[j];
                for (std::size_t j = 0; j < len; ++j) {
                    const double ds = attn[i * len + j] * (dalpha[j] - dot_ad) * inv_sqrt_h;
                    kernels::axpy(ds, {kproj.data() + j * h, h}, {dq.data() + i * h, h});
                    kernels::axpy(ds, {q.data() + i * h, h}, {dk.data() + j * h, h});
                }
            }
            for (std::size_t i = 0; i < len; ++i) {
                matvec_backward(layer.w_query, x.data() + i * h, dq.data() + i * h,
                                dx.data() + i * h);
                matvec_backward(layer.w_key, x.data() + i * h, dk.data() + i * h,
                                dx.data() + i * h);
            }
        }
        d = std::move(dx);
    }

    // Into the embedding tables.
    for (std::size_t i = 0; i < len; ++i) {
        kernels::axpy(1.0, {d.data() + i * h, h},
                      {embedding_.grad_row(static_cast<std::size_t>(cache.ids[i])), h});
        kernels::axpy(1.0, {d.data() + i * h, h}, {position_.grad_row(i), h});
    }
}

void Encoder::for_each_tensor(const std::function<void(Tensor&)>& fn) {
    fn(embedding_);
    fn(position_);
    for (auto& layer : layers_params_) {
        fn(layer.w_self);
        fn(layer.w_mix);
        fn(layer.bias);
        if (mixing_ == Mixing::Attention) {
            fn(layer.w_query);
            fn(layer.w_key);
        }
    }
}

void Encoder::zero_grad() {
    for_each_tensor([](Tensor& t) { std::fill(t.g.begin(), t.g.end(), 0.0); });
}

json Encoder::to_json() const {
    json layers = json::array();
    for (const auto& layer : layers_params_) {
        json jl{{"w_self", tensor_to_json(layer.w_self)},
                {"w_mix", tensor_to_json(layer.w_mix)},
                {"bias", tensor_to_json(layer.bias)}};
        if (mixing_ == Mixing::Attention) {
            jl["w_query"] = tensor_to_json(layer.w_query);
            jl["w_key"] = tensor_to_json(layer.w_key);
        }
        layers.push_back(std::move(jl));
    }
    return json{{"embedding", tensor_to_json(embedding_)},
                {"position", tensor_to_json(position_)},
                {"layers", layers}};
}

void Encoder::load_json(const json& j, const TinyConfig& cfg) {
    hidden_ = cfg.hidden;
    layers_ = cfg.layers;
    mixing_ = cfg.mixing;
    embedding_ = tensor_from_json(j.at("embedding"));
    position_ = tensor_from_json(j.at("position"));
    layers_params_.clear();
    for (const auto& jl : j.at("layers")) {
        Layer layer;
        layer.w_self = tensor_from_json(jl.at("w_self"));
        layer.w_mix = tensor_from_json(jl.at("w_mix"));
        layer.bias = tensor_from_json(jl.at("bias"));
        if (mixing_ == Mixing::Attention) {
            layer.w_query = tensor_from_json(jl.at("w_query"));
            layer.w_key = tensor_from_json(jl.at("w_key"));
        }
        layers_params_.push_back(std::move(layer));
    }
}

// --- extractive model ----------------------------------------------------------

ExtractiveModel::ExtractiveModel(TinyConfig cfg, Vocab vocab, std::uint64_t seed)
    : cfg_(cfg), vocab_(std::move(vocab)) {
    Rng rng(seed);
    encoder_.init(cfg_, vocab_.size(), rng);
    const std::size_t h = static_cast<std::size_t>(cfg_.hidden);
    init_tensor(start_head_, 1, h, rng, 0.08);
    init_tensor(end_head_, 1, h, rng, 0.08);
}

double ExtractiveModel::batch_loss(const std::vector<SpanExample>& batch, bool accumulate_grad) {
    if (batch.empty()) throw validation_error("extractive batch_loss: empty batch");
    const std::size_t h = static_cast<std::size_t>(cfg_.hidden);
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;

    for (const auto& ex : batch) {
        Encoder::Cache cache;
        encoder_.forward(ex.seq.ids, &cache);
        const std::size_t len = ex.seq.ids.size();

        std::vector<double> s_logits(len), e_logits(len);
        for (std::size_t i = 0; i < len; ++i) {
            s_logits[i] = kernels::dot({start_head_.row(0), h}, {cache.out.data() + i * h, h});
            e_logits[i] = kernels::dot({end_head_.row(0), h}, {cache.out.data() + i * h, h});
        }
        total += loss_mrc(s_logits, e_logits, ex.gold_start, ex.gold_end);

        if (!accumulate_grad) continue;

        const auto ps = softmax(s_logits);
        const auto pe = softmax(e_logits);
        std::vector<double> d_hidden(len * h, 0.0);
        for (std::size_t i = 0; i < len; ++i) {
            const double ds =
                0.5 * inv_b * (ps[i] - (static_cast<int>(i) == ex.gold_start ? 1.0 : 0.0));
            const double de =
                0.5 * inv_b * (pe[i] - (static_cast<int>(i) == ex.gold_end ? 1.0 : 0.0));
            kernels::axpy(ds, {cache.out.data() + i * h, h}, {start_head_.grad_row(0), h});
            kernels::axpy(de, {cache.out.data() + i * h, h}, {end_head_.grad_row(0), h});
            kernels::axpy(ds, {start_head_.row(0), h}, {d_hidden.data() + i * h, h});
            kernels::axpy(de, {end_head_.row(0), h}, {d_hidden.data() + i * h, h});
        }
        encoder_.backward(cache, d_hidden);
    }
    return total * inv_b;
}

SpanPrediction ExtractiveModel::predict(const PackedSequence& seq) const {
    Encoder::Cache cache;
    encoder_.forward(seq.ids, &cache);
    const std::size_t h = static_cast<std::size_t>(cfg_.hidden);
    const std::size_t len = seq.ids.size();

    std::vector<double> s_logits(len), e_logits(len);
    for (std::size_t i = 0; i < len; ++i) {
        s_logits[i] = kernels::dot({start_head_.row(0), h}, {cache.out.data() + i * h, h});
        e_logits[i] = kernels::dot({end_head_.row(0), h}, {cache.out.data() + i * h, h});
    }

    SpanPrediction pred;
    pred.start_probs = softmax(s_logits);
    pred.end_probs = softmax(e_logits);

    // Exhaustive scan over admissible pairs in the context region.
    double best = -1.0;
    for (int s = seq.ctx_begin; s < seq.ctx_end; ++s) {
        const int e_max = std::min(seq.ctx_end - 1, s + cfg_.max_span);
        for (int e = s; e <= e_max; ++e) {
            const double score = pred.start_probs[static_cast<std::size_t>(s)] *
                                 pred.end_probs[static_cast<std::size_t>(e)];
            if (score > best) {
                best = score;
                pred.best_start = s;
                pred.best_end = e;
            }
        }
    }
    pred.valid = pred.best_start >= 0;
    return pred;
}

std::string ExtractiveModel::extract_span(const PackedSequence& seq,
                                          const std::string& context) const {
    const SpanPrediction pred = predict(seq);
    if (!pred.valid) return "";
    const std::size_t first = static_cast<std::size_t>(pred.best_start - seq.ctx_begin);
    const std::size_t last = static_cast<std::size_t>(pred.best_end - seq.ctx_begin);
    return utf8::substr(context, seq.ctx_char_spans[first].first, seq.ctx_char_spans[last].second);
}

void ExtractiveModel::for_each_tensor(const std::function<void(Tensor&)>& fn) {
    encoder_.for_each_tensor(fn);
    fn(start_head_);
    fn(end_head_);
}

void ExtractiveModel::for_each_tensor_const(const std::function<void(const Tensor&)>& fn) const {
    auto* self = const_cast<ExtractiveModel*>(this);
    self->for_each_tensor([&](Tensor& t) { fn(t); });
}

// Shared flatten/unflatten helpers.
namespace {

std::vector<double> flatten_values(const std::function<void(const std::function<void(Tensor&)>&)>& each) {
    std::vector<double> flat;
    each([&](Tensor& t) { flat.insert(flat.end(), t.v.begin(), t.v.end()); });
    return flat;
}

std::vector<double> flatten_grads(const std::function<void(const std::function<void(Tensor&)>&)>& each) {
    std::vector<double> flat;
    each([&](Tensor& t) { flat.insert(flat.end(), t.g.begin(), t.g.end()); });
    return flat;
}

void unflatten_values(const std::function<void(const std::function<void(Tensor&)>&)>& each,
                      const std::vector<double>& flat) {
    std::size_t off = 0;
    each([&](Tensor& t) {
        if (off + t.v.size() > flat.size()) throw validation_error("flat parameter size mismatch");
        std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
                  flat.begin() + static_cast<std::ptrdiff_t>(off + t.v.size()), t.v.begin());
        off += t.v.size();
    });
    if (off != flat.size()) throw validation_error("flat parameter size mismatch");
}

}  // namespace

std::vector<double> ExtractiveModel::flat_params() const {
    auto* self = const_cast<ExtractiveModel*>(this);
    return flatten_values([&](const std::function<void(Tensor&)>& fn) { self->for_each_tensor(fn); });
}

void ExtractiveModel::set_flat_params(const std::vector<double>& flat) {
    unflatten_values([&](const std::function<void(Tensor&)>& fn) { for_each_tensor(fn); }, flat);
}

std::vector<double> ExtractiveModel::flat_grads() const {
    auto* self = const_cast<ExtractiveModel*>(this);
    return flatten_grads([&](const std::function<void(Tensor&)>& fn) { self->for_each_tensor(fn); });
}

void ExtractiveModel::zero_grad() {
    for_each_tensor([](Tensor& t) { std::fill(t.g.begin(), t.g.end(), 0.0); });
}

// --- answer classifier ------------------------------------------------------------

AnswerClassifier::AnswerClassifier(TinyConfig cfg, Vocab vocab, std::uint64_t seed)
    : cfg_(cfg), vocab_(std::move(vocab)) {
    Rng rng(seed ^ 0x9E3779B9ULL);
    encoder_.init(cfg_, vocab_.size(), rng);
    const std::size_t h = static_cast<std::size_t>(cfg_.hidden);
    init_tensor(head_w_, 2, h, rng, 0.08);
    init_tensor(head_b_, 1, 2, rng, 0.0);
}

double AnswerClassifier::batch_loss(const std::vector<ClassifyExample>& batch,
                                    bool accumulate_grad) {
    if (batch.empty()) throw validation_error("classifier batch_loss: empty batch");
    const std::size_t h = static_cast<std::size_t>(cfg_.hidden);
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;

    for (const auto& ex : batch) {
        std::vector<int> ids = ex.ids.empty() ? std::vector<int>{Vocab::kUnk} : ex.ids;
        Encoder::Cache cache;
        encoder_.forward(ids, &cache);
        const std::size_t len = ids.size();

        std::vector<double> pool(h, 0.0);
        for (std::size_t i = 0; i < len; ++i)
            kernels::axpy(1.0, {cache.out.data() + i * h, h}, {pool.data(), h});
        kernels::scale({pool.data(), h}, 1.0 / static_cast<double>(len));

        std::vector<double> logits(2, 0.0);
        logits[0] = head_b_.at(0, 0);
        logits[1] = head_b_.at(0, 1);
        logits[0] += kernels::dot({head_w_.row(0), h}, {pool.data(), h});
        logits[1] += kernels::dot({head_w_.row(1), h}, {pool.data(), h});
        total += loss_ce(logits, ex.label);

        if (!accumulate_grad) continue;

        const auto p = softmax(logits);
        std::vector<double> dpool(h, 0.0);
        for (int c = 0; c < 2; ++c) {
            const double dl = inv_b * (p[static_cast<std::size_t>(c)] - (c == ex.label ? 1.0 : 0.0));
            kernels::axpy(dl, {pool.data(), h}, {head_w_.grad_row(static_cast<std::size_t>(c)), h});
            head_b_.g[static_cast<std::size_t>(c)] += dl;
            kernels::axpy(dl, {head_w_.row(static_cast<std::size_t>(c)), h}, {dpool.data(), h});
        }
        std::vector<double> d_hidden(len * h, 0.0);
        const double inv_len = 1.0 / static_cast<double>(len);
        for (std::size_t i = 0; i < len; ++i)
            kernels::axpy(inv_len, {dpool.data(), h}, {d_hidden.data() + i * h, h});
        encoder_.backward(cache, d_hidden);
    }
    return total * inv_b;
}

double AnswerClassifier::prob_positive(const std::vector<int>& ids_in) const {
    std::vector<int> ids = ids_in.empty() ? std::vector<int>{Vocab::kUnk} : ids_in;
    Encoder::Cache cache;
    encoder_.forward(ids, &cache);
    const std::size_t h = static_cast<std::size_t>(cfg_.hidden);
    const std::size_t len = ids.size();
    std::vector<double> pool(h, 0.0);
    for (std::size_t i = 0; i < len; ++i)
        kernels::axpy(1.0, {cache.out.data() + i * h, h}, {pool.data(), h});
    kernels::scale({pool.data(), h}, 1.0 / static_cast<double>(len));
    std::vector<double> logits(2);
    logits[0] = head_b_.at(0, 0) + kernels::dot({head_w_.row(0), h}, {pool.data(), h});
    logits[1] = head_b_.at(0, 1) + kernels::dot({head_w_.row(1), h}, {pool.data(), h});
    return softmax(logits)[1];
}

void AnswerClassifier::for_each_tensor(const std::function<void(Tensor&)>& fn) {
    encoder_.for_each_tensor(fn);
    fn(head_w_);
    fn(head_b_);
}

void AnswerClassifier::for_each_tensor_const(const std::function<void(const Tensor&)>& fn) const {
    auto* self = const_cast<AnswerClassifier*>(this);
    self->for_each_tensor([&](Tensor& t) { fn(t); });
}

std::vector<double> AnswerClassifier::flat_params() const {
    auto* self = const_cast<AnswerClassifier*>(this);
    return flatten_values([&](const std::function<void(Tensor&)>& fn) { self->for_each_tensor(fn); });
}

void AnswerClassifier::set_flat_params(const std::vector<double>& flat) {
    unflatten_values([&](const std::function<void(Tensor&)>& fn) { for_each_tensor(fn); }, flat);
}

std::vector<double> AnswerClassifier::flat_grads() const {
    auto* self = const_cast<AnswerClassifier*>(this);
    return flatten_grads([&](const std::function<void(Tensor&)>& fn) { self->for_each_tensor(fn); });
}

void AnswerClassifier::zero_grad() {
    for_each_tensor([](Tensor& t) { std::fill(t.g.begin(), t.g.end(), 0.0); });
}

// --- generative model ----------------------------------------------------------

GenerativeModel::GenerativeModel(TinyConfig cfg, Vocab vocab, std::uint64_t seed)
    : cfg_(cfg), vocab_(std::move(vocab)) {
    Rng rng(seed ^ 0x51F355C1D2ULL);
    encoder_.init(cfg_, vocab_.size(), rng);
    const std::size_t h = static_cast<std::size_t>(cfg_.hidden);
    const std::size_t v = vocab_.size();
    init_tensor(dec_embedding_, v, h, rng, 0.1);
    init_tensor(dec_position_, static_cast<std::size_t>(cfg_.max_len), h, rng, 0.1);
    init_tensor(dec_w_query_, h, h, rng, 0.08);
    init_tensor(dec_w_in_, h, h, rng, 0.08);
    init_tensor(dec_w_att_, h, h, rng, 0.08);
    init_tensor(dec_bias_, 1, h, rng, 0.0);
    init_tensor(out_w_, v, h, rng, 0.08);
    init_tensor(out_b_, 1, v, rng, 0.0);
    init_tensor(cls_w_, 1, h, rng, 0.08);
    init_tensor(cls_b_, 1, 1, rng, 0.0);
}

struct GenerativeModel::DecodeCache {
    std::vector<int> prev_ids;          // input token per step
    std::vector<double> u;              // T x H
    std::vector<double> qv;             // T x H
    std::vector<double> alpha;          // T x enc_len
    std::vector<double> ctx;            // T x H
    std::vector<double> hidden;         // T x H
    std::vector<std::vector<double>> logits;  // per step, V
};

void GenerativeModel::decode_forward(const std::vector<double>& enc_out, std::size_t enc_len,
                                     const std::vector<int>& answer_ids, DecodeCache* cache) const {
    const std::size_t h = static_cast<std::size_t>(cfg_.hidden);
    const std::size_t steps = answer_ids.size();
    const std::size_t v = vocab_.size();
    const double inv_sqrt_h = 1.0 / std::sqrt(static_cast<double>(h));
    if (steps == 0) throw validation_error("decoder: empty target sequence");
    if (steps > dec_position_.rows)
        throw validation_error("decoder: target length exceeds max_len");

    cache->prev_ids.resize(steps);
    cache->u.assign(steps * h, 0.0);
    cache->qv.assign(steps * h, 0.0);
    cache->alpha.assign(steps * enc_len, 0.0);
    cache->ctx.assign(steps * h, 0.0);
    cache->hidden.assign(steps * h, 0.0);
    cache->logits.assign(steps, std::vector<double>(v, 0.0));

    for (std::size_t t = 0; t < steps; ++t) {
        const int prev = t == 0 ? Vocab::kBos : answer_ids[t - 1];
        cache->prev_ids[t] = prev;
        double* u = cache->u.data() + t * h;
        const double* e = dec_embedding_.row(static_cast<std::size_t>(prev));
        const double* p = dec_position_.row(t);
        for (std::size_t k = 0; k < h; ++k) u[k] = e[k] + p[k];

        double* qv = cache->qv.data() + t * h;
        matvec_acc(dec_w_query_, u, qv);

        std::vector<double> scores(enc_len);
        for (std::size_t i = 0; i < enc_len; ++i)
            scores[i] = kernels::dot({qv, h}, {enc_out.data() + i * h, h}) * inv_sqrt_h;
        const auto a = softmax(scores);
        std::copy(a.begin(), a.end(), cache->alpha.begin() + static_cast<std::ptrdiff_t>(t * enc_len));

        double* ctx = cache->ctx.data() + t * h;
        for (std::size_t i = 0; i < enc_len; ++i)
            kernels::axpy(a[i], {enc_out.data() + i * h, h}, {ctx, h});

        double* hid = cache->hidden.data() + t * h;
        std::copy(dec_bias_.row(0), dec_bias_.row(0) + h, hid);
        matvec_acc(dec_w_in_, u, hid);
        matvec_acc(dec_w_att_, ctx, hid);
        for (std::size_t k = 0; k < h; ++k) hid[k] = std::tanh(hid[k]);

        auto& logits = cache->logits[t];
        std::copy(out_b_.row(0), out_b_.row(0) + v, logits.data());
        for (std::size_t r = 0; r < v; ++r)
            logits[r] += kernels::dot({out_w_.row(r), h}, {hid, h});
    }
}

double GenerativeModel::batch_loss(const std::vector<GenerativeExample>& batch, GenLossPart part,
                                   double pos_weight, bool accumulate_grad) {
    if (batch.empty()) throw validation_error("generative batch_loss: empty batch");
    if (pos_weight <= 0.0) throw validation_error("generative batch_loss: pos_weight must be > 0");
    const std::size_t h = static_cast<std::size_t>(cfg_.hidden);
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    const double inv_sqrt_h = 1.0 / std::sqrt(static_cast<double>(h));
    double total = 0.0;

    const bool want_gen = part == GenLossPart::Generative || part == GenLossPart::Total;
    const bool want_bce = part == GenLossPart::Bce || part == GenLossPart::Total;

    for (const auto& ex : batch) {
        if (ex.answer_ids.empty())
            throw validation_error("generative batch_loss: zero-length target disallowed");

        Encoder::Cache enc_cache;
        encoder_.forward(ex.seq.ids, &enc_cache);
        const std::size_t enc_len = ex.seq.ids.size();

        DecodeCache dec;
        decode_forward(enc_cache.out, enc_len, ex.answer_ids, &dec);
        const std::size_t steps = ex.answer_ids.size();

        // Shared forward pass; both objectives read the same decoder states.
        double gen_part = loss_generative(dec.logits, ex.answer_ids);

        std::vector<double> pool(h, 0.0);
        for (std::size_t t = 0; t < steps; ++t)
            kernels::axpy(1.0, {dec.hidden.data() + t * h, h}, {pool.data(), h});
        kernels::scale({pool.data(), h}, 1.0 / static_cast<double>(steps));
        const double cls_logit = cls_b_.at(0, 0) + kernels::dot({cls_w_.row(0), h}, {pool.data(), h});
        double bce_part = loss_bce(cls_logit, ex.label, pos_weight);

        if (want_gen) total += gen_part;
        if (want_bce) total += bce_part;

        if (!accumulate_grad) continue;

        std::vector<double> d_hidden(steps * h, 0.0);

        if (want_gen) {
            for (std::size_t t = 0; t < steps; ++t) {
                const auto p = softmax(dec.logits[t]);
                const double* hid = dec.hidden.data() + t * h;
                for (std::size_t r = 0; r < p.size(); ++r) {
                    const double dl =
                        inv_b * (p[r] - (static_cast<int>(r) == ex.answer_ids[t] ? 1.0 : 0.0));
                    if (dl == 0.0) continue;
                    kernels::axpy(dl, {hid, h}, {out_w_.grad_row(r), h});
                    out_b_.g[r] += dl;
                    kernels::axpy(dl, {out_w_.row(r), h}, {d_hidden.data() + t * h, h});
                }
            }
        }

        if (want_bce) {
            const double s = sigmoid(cls_logit);
            const double dz = inv_b * ((ex.label == 0 ? s : 0.0) -
                                       (ex.label == 1 ? pos_weight * (1.0 - s) : 0.0));
            kernels::axpy(dz, {pool.data(), h}, {cls_w_.grad_row(0), h});
            cls_b_.g[0] += dz;
            std::vector<double> dpool(h, 0.0);
            kernels::axpy(dz, {cls_w_.row(0), h}, {dpool.data(), h});
            const double inv_steps = 1.0 / static_cast<double>(steps);
            for (std::size_t t = 0; t < steps; ++t)
                kernels::axpy(inv_steps, {dpool.data(), h}, {d_hidden.data() + t * h, h});
        }

        // Decoder backward; encoder gradient accumulates across steps.
        std::vector<double> d_enc(enc_len * h, 0.0);
        for (std::size_t t = 0; t < steps; ++t) {
            const double* hid = dec.hidden.data() + t * h;
            std::vector<double> dpre(h);
            for (std::size_t k = 0; k < h; ++k)
                dpre[k] = d_hidden[t * h + k] * (1.0 - hid[k] * hid[k]);

            const double* u = dec.u.data() + t * h;
            const double* ctx = dec.ctx.data() + t * h;
            std::vector<double> du(h, 0.0), dctx(h, 0.0);
            matvec_backward(dec_w_in_, u, dpre.data(), du.data());
            matvec_backward(dec_w_att_, ctx, dpre.data(), dctx.data());
            kernels::axpy(1.0, {dpre.data(), h}, {dec_bias_.grad_row(0), h});

            // Attention backward.
            const double* alpha = dec.alpha.data() + t * enc_len;
            std::vector<double> dalpha(enc_len);
            for (std::size_t i = 0; i < enc_len; ++i) {
                dalpha[i] = kernels::dot({dctx.data(), h}, {enc_cache.out.data() + i * h, h});
                kernels::axpy(alpha[i], {dctx.data(), h}, {d_enc.data() + i * h, h});
            }
            double dot_ad = 0.0;
            for (std::size_t i = 0; i < enc_len; ++i) dot_ad += alpha[i] * dalpha[i];
            std::vector<double> dqv(h, 0.0);
            const double* qv = dec.qv.data() + t * h;
            for (std::size_t i = 0; i < enc_len; ++i) {
                const double ds = alpha[i] * (dalpha[i] - dot_ad) * inv_sqrt_h;
                kernels::axpy(ds, {enc_cache.out.data() + i * h, h}, {dqv.data(), h});
                kernels::axpy(ds, {qv, h}, {d_enc.data() + i * h, h});
            }
            matvec_backward(dec_w_query_, u, dqv.data(), du.data());

            kernels::axpy(1.0, {du.data(), h},
                          {dec_embedding_.grad_row(static_cast<std::size_t>(dec.prev_ids[t])), h});
            kernels::axpy(1.0, {du.data(), h}, {dec_position_.grad_row(t), h});
        }
        encoder_.backward(enc_cache, d_enc);
    }
    return total * inv_b;
}

std::vector<int> GenerativeModel::generate(const PackedSequence& seq, int max_steps) const {
    Encoder::Cache enc_cache;
    encoder_.forward(seq.ids, &enc_cache);
    const std::size_t enc_len = seq.ids.size();

    std::vector<int> out;
    for (int step = 0; step < max_steps; ++step) {
        // The decoder state at step t depends only on the previous token and
        // the encoder states, so one-step decode per emitted token suffices.
        std::vector<int> probe = out;
        probe.push_back(Vocab::kEos);  // placeholder target for step t
        DecodeCache dec;
        decode_forward(enc_cache.out, enc_len, probe, &dec);
        const auto& logits = dec.logits.back();
        int best = 0;
        for (std::size_t r = 1; r < logits.size(); ++r)
            if (logits[r] > logits[best] ) best = static_cast<int>(r);
        if (best == Vocab::kEos) break;
        out.push_back(best);
    }
    return out;
}

double GenerativeModel::classify_logit(const PackedSequence& seq,
                                       const std::vector<int>& answer_ids) const {
    if (answer_ids.empty()) throw validation_error("classify_logit: empty answer sequence");
    Encoder::Cache enc_cache;
    encoder_.forward(seq.ids, &enc_cache);
    DecodeCache dec;
    decode_forward(enc_cache.out, seq.ids.size(), answer_ids, &dec);
    const std::size_t h = static_cast<std::size_t>(cfg_.hidden);
    const std::size_t steps = answer_ids.size();
    std::vector<double> pool(h, 0.0);
    for (std::size_t t = 0; t < steps; ++t)
        kernels::axpy(1.0, {dec.hidden.data() + t * h, h}, {pool.data(), h});
    kernels::scale({pool.data(), h}, 1.0 / static_cast<double>(steps));
    return cls_b_.at(0, 0) + kernels::dot({cls_w_.row(0), h}, {pool.data(), h});
}

void GenerativeModel::for_each_tensor(const std::function<void(Tensor&)>& fn) {
    encoder_.for_each_tensor(fn);
    fn(dec_embedding_);
    fn(dec_position_);
    fn(dec_w_query_);
    fn(dec_w_in_);
    fn(dec_w_att_);
    fn(dec_bias_);
    fn(out_w_);
    fn(out_b_);
    fn(cls_w_);
    fn(cls_b_);
}

void GenerativeModel::for_each_tensor_const(const std::function<void(const Tensor&)>& fn) const {
    auto* self = const_cast<GenerativeModel*>(this);
    self->for_each_tensor([&](Tensor& t) { fn(t); });
}

std::vector<double> GenerativeModel::flat_params() const {
    auto* self = const_cast<GenerativeModel*>(this);
    return flatten_values([&](const std::function<void(Tensor&)>& fn) { self->for_each_tensor(fn); });
}

void GenerativeModel::set_flat_params(const std::vector<double>& flat) {
    unflatten_values([&](const std::function<void(Tensor&)>& fn) { for_each_tensor(fn); }, flat);
}

std::vector<double> GenerativeModel::flat_grads() const {
    auto* self = const_cast<GenerativeModel*>(this);
    return flatten_grads([&](const std::function<void(Tensor&)>& fn) { self->for_each_tensor(fn); });
}

void GenerativeModel::zero_grad() {
    for_each_tensor([](Tensor& t) { std::fill(t.g.begin(), t.g.end(), 0.0); });
}

// --- persistence -------------------------------------------------------------------

namespace {
constexpr char kTinyMagic[4] = {'R', 'K', 'T', 'M'};

void save_model(const std::filesystem::path& path, const json& extra_header, const TinyConfig& cfg,
                const Vocab& vocab, const json& tensors, const char* kind) {
    json header = extra_header;
    header["kind"] = kind;
    header["config"] = cfg.to_json();
    header["vocab"] = vocab.to_json();
    binio::Writer w(path, kTinyMagic, 1, header);
    w.put_string(tensors.dump());
    w.finish();
}

json load_model(const std::filesystem::path& path, const char* kind, TinyConfig* cfg, Vocab* vocab) {
    binio::Reader r(path, kTinyMagic, 1);
    if (r.header().value("kind", "") != kind)
        throw validation_error(path.string() + ": checkpoint kind mismatch (expected " +
                               std::string(kind) + ")");
    *cfg = TinyConfig::from_json(r.header().at("config"));
    *vocab = Vocab::from_json(r.header().at("vocab"));
    json tensors = json::parse(r.get_string(), nullptr, false);
    if (tensors.is_discarded()) throw validation_error(path.string() + ": corrupt tensor payload");
    return tensors;
}

}  // namespace

void ExtractiveModel::save(const std::filesystem::path& path, const json& extra_header) const {
    json tensors{{"encoder", encoder_.to_json()},
                 {"start_head", tensor_to_json(start_head_)},
                 {"end_head", tensor_to_json(end_head_)}};
    save_model(path, extra_header, cfg_, vocab_, tensors, "extractive");
}

ExtractiveModel ExtractiveModel::load(const std::filesystem::path& path) {
    TinyConfig cfg;
    Vocab vocab;
    json tensors = load_model(path, "extractive", &cfg, &vocab);
    ExtractiveModel model(cfg, vocab, 0);
    model.encoder_.load_json(tensors.at("encoder"), cfg);
    model.start_head_ = tensor_from_json(tensors.at("start_head"));
    model.end_head_ = tensor_from_json(tensors.at("end_head"));
    return model;
}

void AnswerClassifier::save(const std::filesystem::path& path, const json& extra_header) const {
    json tensors{{"encoder", encoder_.to_json()},
                 {"head_w", tensor_to_json(head_w_)},
                 {"head_b", tensor_to_json(head_b_)}};
    save_model(path, extra_header, cfg_, vocab_, tensors, "classifier");
}

AnswerClassifier AnswerClassifier::load(const std::filesystem::path& path) {
    TinyConfig cfg;
    Vocab vocab;
    json tensors = load_model(path, "classifier", &cfg, &vocab);
    AnswerClassifier model(cfg, vocab, 0);
    model.encoder_.load_json(tensors.at("encoder"), cfg);
    model.head_w_ = tensor_from_json(tensors.at("head_w"));
    model.head_b_ = tensor_from_json(tensors.at("head_b"));
    return model;
}

void GenerativeModel::save(const std::filesystem::path& path, const json& extra_header) const {
    json tensors{{"encoder", encoder_.to_json()},
                 {"dec_embedding", tensor_to_json(dec_embedding_)},
                 {"dec_position", tensor_to_json(dec_position_)},
                 {"dec_w_query", tensor_to_json(dec_w_query_)},
                 {"dec_w_in", tensor_to_json(dec_w_in_)},
                 {"dec_w_att", tensor_to_json(dec_w_att_)},
                 {"dec_bias", tensor_to_json(dec_bias_)},
                 {"out_w", tensor_to_json(out_w_)},
                 {"out_b", tensor_to_json(out_b_)},
                 {"cls_w", tensor_to_json(cls_w_)},
                 {"cls_b", tensor_to_json(cls_b_)}};
    save_model(path, extra_header, cfg_, vocab_, tensors, "generative");
}

GenerativeModel GenerativeModel::load(const std::filesystem::path& path) {
    TinyConfig cfg;
    Vocab vocab;
    json tensors = load_model(path, "generative", &cfg, &vocab);
    GenerativeModel model(cfg, vocab, 0);
    model.encoder_.load_json(tensors.at("encoder"), cfg);
    model.dec_embedding_ = tensor_from_json(tensors.at("dec_embedding"));
    model.dec_position_ = tensor_from_json(tensors.at("dec_position"));
    model.dec_w_query_ = tensor_from_json(tensors.at("dec_w_query"));
    model.dec_w_in_ = tensor_from_json(tensors.at("dec_w_in"));
    model.dec_w_att_ = tensor_from_json(tensors.at("dec_w_att"));
    model.dec_bias_ = tensor_from_json(tensors.at("dec_bias"));
    model.out_w_ = tensor_from_json(tensors.at("out_w"));
    model.out_b_ = tensor_from_json(tensors.at("out_b"));
    model.cls_w_ = tensor_from_json(tensors.at("cls_w"));
    model.cls_b_ = tensor_from_json(tensors.at("cls_b"));
    return model;
}

// --- training ----------------------------------------------------------------------

AdamW::AdamW(std::size_t dim, double lr, double weight_decay)
    : lr_(lr), weight_decay_(weight_decay), m_(dim, 0.0), v_(dim, 0.0) {}

void AdamW::step(std::vector<double>& params, const std::vector<double>& grads, double lr_scale) {
    if (params.size() != m_.size() || grads.size() != m_.size())
        throw internal_error("AdamW: dimension mismatch");
    ++t_;
    const double lr = lr_ * lr_scale;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i] * grads[i];
        const double mhat = m_[i] / bc1;
        const double vhat = v_[i] / bc2;
        params[i] -= lr * (mhat / (std::sqrt(vhat) + eps_) + weight_decay_ * params[i]);
    }
}

std::vector<SpanExample> make_span_examples(const Vocab& vocab,
                                            const std::vector<Instance>& instances, int max_len,
                                            std::size_t* skipped) {
    std::vector<SpanExample> out;
    std::size_t skip_count = 0;
    for (const auto& inst : instances) {
        PackedSequence seq;
        try {
            seq = pack_sequence(vocab, inst.question, inst.context, max_len);
        } catch (const Error&) {
            ++skip_count;
            continue;
        }
        const std::size_t ans_begin = inst.answer_start;
        const std::size_t ans_end = ans_begin + utf8::length(inst.answer_text);
        int gold_s = -1, gold_e = -1;
        for (std::size_t i = 0; i < seq.ctx_char_spans.size(); ++i) {
            const auto& [ts, te] = seq.ctx_char_spans[i];
            if (ts >= ans_begin && te <= ans_end) {
                if (gold_s < 0) gold_s = static_cast<int>(i);
                gold_e = static_cast<int>(i);
            }
        }
        if (gold_s < 0) {
            ++skip_count;
            continue;
        }
        SpanExample ex;
        ex.seq = std::move(seq);
        ex.gold_start = ex.seq.ctx_begin + gold_s;
        ex.gold_end = ex.seq.ctx_begin + gold_e;
        out.push_back(std::move(ex));
    }
    if (skipped) *skipped = skip_count;
    return out;
}

std::vector<GenerativeExample> make_generative_examples(const Vocab& vocab,
                                                        const std::vector<Instance>& instances,
                                                        int max_len) {
    std::vector<GenerativeExample> out;
    for (const auto& inst : instances) {
        GenerativeExample ex;
        try {
            ex.seq = pack_sequence(vocab, inst.question, inst.context, max_len);
        } catch (const Error&) {
            continue;
        }
        ex.answer_ids = vocab.encode(inst.answer_text);
        ex.answer_ids.push_back(Vocab::kEos);
        ex.label = inst.label == Label::Low ? 1 : 0;
        out.push_back(std::move(ex));
    }
    return out;
}

namespace {

// Shared epoch loop: shuffles, batches, accumulates grads, steps AdamW with
// cosine decay, and aborts on non-finite loss.
template <typename LossFn, typename Model>
TrainReport run_training(Model& model, std::size_t n_examples, const TrainOptions& opts,
                         LossFn&& batch_loss_grad) {
    if (n_examples == 0) throw validation_error("train: empty dataset");

    std::vector<double> params = model.flat_params();
    AdamW opt(params.size(), opts.lr, opts.weight_decay);
    Rng rng(opts.seed);

    const std::size_t batch = std::max(1, opts.batch_size);
    const std::size_t accum = std::max(1, opts.grad_accum);
    const std::size_t batches_per_epoch = (n_examples + batch - 1) / batch;
    const std::size_t steps_per_epoch = (batches_per_epoch + accum - 1) / accum;
    const std::size_t total_steps = steps_per_epoch * static_cast<std::size_t>(opts.epochs);

    TrainReport report;
    std::vector<std::size_t> order(n_examples);
    std::iota(order.begin(), order.end(), 0);

    std::size_t step_index = 0;
    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t batch_count = 0;
        std::size_t accum_count = 0;
        std::vector<double> accum_grad(params.size(), 0.0);

        auto do_step = [&] {
            if (accum_count == 0) return;
            for (auto& g : accum_grad) g /= static_cast<double>(accum_count);
            double lr_scale = 1.0;
            if (opts.cosine_decay && total_steps > 1)
                lr_scale = 0.5 * (1.0 + std::cos(3.14159265358979323846 *
                                                 static_cast<double>(step_index) /
                                                 static_cast<double>(total_steps)));
            opt.step(params, accum_grad, lr_scale);
            model.set_flat_params(params);
            std::fill(accum_grad.begin(), accum_grad.end(), 0.0);
            accum_count = 0;
            ++step_index;
        };

        for (std::size_t b = 0; b < batches_per_epoch; ++b) {
            const std::size_t lo = b * batch;
            const std::size_t hi = std::min(n_examples, lo + batch);
            model.zero_grad();
            const double loss = batch_loss_grad(order, lo, hi);
            if (!std::isfinite(loss))
                throw internal_error("training aborted: non-finite loss at epoch " +
                                     std::to_string(epoch) + ", batch " + std::to_string(b));
            epoch_loss += loss;
            ++batch_count;
            const auto g = model.flat_grads();
            for (std::size_t i = 0; i < g.size(); ++i) accum_grad[i] += g[i];
            ++accum_count;
            if (accum_count == accum) do_step();
        }
        do_step();
        report.epoch_losses.push_back(epoch_loss / static_cast<double>(batch_count));
    }
    return report;
}

}  // namespace

TrainReport train_extractive(ExtractiveModel& model, const std::vector<SpanExample>& data,
                             const TrainOptions& opts) {
    return run_training(model, data.size(), opts,
                        [&](const std::vector<std::size_t>& order, std::size_t lo, std::size_t hi) {
                            std::vector<SpanExample> batch;
                            batch.reserve(hi - lo);
                            for (std::size_t i = lo; i < hi; ++i) batch.push_back(data[order[i]]);
                            return model.batch_loss(batch, true);
                        });
}

TrainReport train_classifier(AnswerClassifier& model, const std::vector<ClassifyExample>& data,
                             const TrainOptions& opts) {
    return run_training(model, data.size(), opts,
                        [&](const std::vector<std::size_t>& order, std::size_t lo, std::size_t hi) {
                            std::vector<ClassifyExample> batch;
                            batch.reserve(hi - lo);
                            for (std::size_t i = lo; i < hi; ++i) batch.push_back(data[order[i]]);
                            return model.batch_loss(batch, true);
                        });
}

TrainReport train_generative(GenerativeModel& model, const std::vector<GenerativeExample>& data,
                             const TrainOptions& opts, double pos_weight) {
    return run_training(model, data.size(), opts,
                        [&](const std::vector<std::size_t>& order, std::size_t lo, std::size_t hi) {
                            std::vector<GenerativeExample> batch;
                            batch.reserve(hi - lo);
                            for (std::size_t i = lo; i < hi; ++i) batch.push_back(data[order[i]]);
                            return model.batch_loss(batch, GenLossPart::Total, pos_weight, true);
                        });
}

}  // namespace robkit::tiny
