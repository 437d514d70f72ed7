#include "robkit/tfidf_index.hpp"

#include "robkit/binio.hpp"
#include "robkit/error.hpp"
#include "robkit/jsonl.hpp"
#include "robkit/kernels.hpp"
#include "robkit/tokenize.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace robkit::index {

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t n = std::min(a.size(), b.size());
    const double num = kernels::dot({a.data(), n}, {b.data(), n});
    const double na = kernels::l2_norm_sq({a.data(), a.size()});
    const double nb = kernels::l2_norm_sq({b.data(), b.size()});
    if (na == 0.0 || nb == 0.0) return 0.0;
    return num / (std::sqrt(na) * std::sqrt(nb));
}

TfidfIndex TfidfIndex::build(const std::vector<corpus::Article>& articles, int num_threads) {
    // Flatten (article, sentence) pairs in input order; row order is stable.
    struct Slot {
        const corpus::Article* article;
        const corpus::Sentence* sentence;
    };
    std::vector<Slot> slots;
    for (const auto& a : articles)
        for (const auto& s : a.sentences) slots.push_back({&a, &s});

    if (slots.empty()) throw validation_error("index build: corpus has no sentences");

    // Tokenize in parallel; each worker writes only its own slots, so the
    // reduce below is order-independent of thread scheduling.
    std::vector<std::vector<std::string>> tokens(slots.size());
    {
        unsigned hw = num_threads > 0 ? static_cast<unsigned>(num_threads)
                                      : std::max(1u, std::thread::hardware_concurrency());
        hw = std::min<unsigned>(hw, 8);
        const std::size_t chunk = (slots.size() + hw - 1) / hw;
        std::vector<std::thread> workers;
        for (unsigned t = 0; t < hw; ++t) {
            const std::size_t lo = t * chunk;
            const std::size_t hi = std::min(slots.size(), lo + chunk);
            if (lo >= hi) break;
            workers.emplace_back([&, lo, hi] {
                for (std::size_t i = lo; i < hi; ++i)
                    tokens[i] = robkit::tokenize(slots[i].sentence->text);
            });
        }
        for (auto& w : workers) w.join();
    }

    bool any_nonempty = false;
    for (const auto& t : tokens)
        if (!t.empty()) { any_nonempty = true; break; }
    if (!any_nonempty) throw validation_error("index build: corpus has no non-empty sentence");

    TfidfIndex idx;

    // Document frequencies in deterministic row order.
    std::map<std::string, std::uint32_t> df;
    for (const auto& ts : tokens) {
        std::vector<std::string> uniq(ts);
        std::sort(uniq.begin(), uniq.end());
        uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
        for (auto& term : uniq) ++df[term];
    }

    const double n_rows = static_cast<double>(tokens.size());
    idx.terms_.reserve(df.size());
    idx.idf_.reserve(df.size());
    for (const auto& [term, count] : df) {
        const std::uint32_t id = static_cast<std::uint32_t>(idx.terms_.size());
        idx.vocabulary_.emplace(term, id);
        idx.terms_.push_back(term);
        idx.idf_.push_back(std::log((1.0 + n_rows) / (1.0 + static_cast<double>(count))) + 1.0);
    }

    idx.row_ptr_.push_back(0);
    for (std::size_t i = 0; i < slots.size(); ++i) {
        std::map<std::uint32_t, double> tf;
        for (const auto& term : tokens[i]) tf[idx.vocabulary_.at(term)] += 1.0;

        const std::size_t begin = idx.val_.size();
        for (const auto& [col, count] : tf) {
            idx.col_.push_back(col);
            idx.val_.push_back(count * idx.idf_[col]);
        }
        double norm_sq = kernels::l2_norm_sq(
            {idx.val_.data() + begin, idx.val_.size() - begin});
        if (norm_sq > 0.0) {
            kernels::scale({idx.val_.data() + begin, idx.val_.size() - begin},
                           1.0 / std::sqrt(norm_sq));
        }
        idx.row_ptr_.push_back(idx.val_.size());

        RowMeta meta;
        meta.pubmed_id = slots[i].article->pubmed_id;
        meta.sentence_index = static_cast<int>(slots[i].sentence->index);
        idx.article_rows_[meta.pubmed_id].push_back(static_cast<std::uint32_t>(i));
        idx.row_meta_.push_back(std::move(meta));
    }

    idx.build_postings();
    return idx;
}

void TfidfIndex::build_postings() {
    postings_.assign(terms_.size(), {});
    for (std::size_t row = 0; row + 1 < row_ptr_.size(); ++row) {
        for (std::uint64_t k = row_ptr_[row]; k < row_ptr_[row + 1]; ++k)
            postings_[col_[k]].emplace_back(static_cast<std::uint32_t>(row), val_[k]);
    }
}

std::vector<std::pair<std::uint32_t, double>> TfidfIndex::vectorize_query(
    std::string_view text) const {
    std::map<std::uint32_t, double> tf;
    for (const auto& term : robkit::tokenize(text)) {
        auto it = vocabulary_.find(term);
        if (it != vocabulary_.end()) tf[it->second] += 1.0;
    }
    std::vector<std::pair<std::uint32_t, double>> vec;
    vec.reserve(tf.size());
    double norm_sq = 0.0;
    for (const auto& [col, count] : tf) {
        const double w = count * idf_[col];
        vec.emplace_back(col, w);
        norm_sq += w * w;
    }
    if (norm_sq > 0.0) {
        const double inv = 1.0 / std::sqrt(norm_sq);
        for (auto& [col, w] : vec) w *= inv;
    }
    return vec;
}

double TfidfIndex::cosine_against_row(
    const std::vector<std::pair<std::uint32_t, double>>& query_vec, std::size_t row) const {
    // Merge join over sorted term ids; both sides are unit vectors.
    double acc = 0.0;
    std::uint64_t k = row_ptr_[row];
    const std::uint64_t end = row_ptr_[row + 1];
    std::size_t q = 0;
    while (q < query_vec.size() && k < end) {
        const std::uint32_t qc = query_vec[q].first;
        const std::uint32_t rc = col_[k];
        if (qc == rc) {
            acc += query_vec[q].second * val_[k];
            ++q;
            ++k;
        } else if (qc < rc) {
            ++q;
        } else {
            ++k;
        }
    }
    return acc;
}

std::vector<QueryHit> TfidfIndex::query(std::string_view text, std::size_t top_k,
                                        const std::optional<std::string>& restrict_pubmed) const {
    if (top_k == 0) throw validation_error("query: top_k must be >= 1");
    const auto query_vec = vectorize_query(text);
    if (query_vec.empty()) return {};

    std::vector<std::pair<std::uint32_t, double>> scored;  // (row, sim)
    if (restrict_pubmed) {
        auto it = article_rows_.find(*restrict_pubmed);
        if (it == article_rows_.end()) return {};
        scored.reserve(it->second.size());
        for (std::uint32_t row : it->second) {
            const double sim = cosine_against_row(query_vec, row);
            if (sim > 0.0) scored.emplace_back(row, sim);
        }
    } else {
        std::vector<double> acc(num_rows(), 0.0);
        for (const auto& [col, qw] : query_vec)
            for (const auto& [row, rw] : postings_[col]) acc[row] += qw * rw;
        for (std::size_t row = 0; row < acc.size(); ++row)
            if (acc[row] > 0.0) scored.emplace_back(static_cast<std::uint32_t>(row), acc[row]);
    }

    std::sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        const RowMeta& ma = row_meta_[a.first];
        const RowMeta& mb = row_meta_[b.first];
        if (ma.pubmed_id != mb.pubmed_id) return ma.pubmed_id < mb.pubmed_id;
        return ma.sentence_index < mb.sentence_index;
    });
    if (scored.size() > top_k) scored.resize(top_k);

    std::vector<QueryHit> hits;
    hits.reserve(scored.size());
    for (const auto& [row, sim] : scored) {
        QueryHit h;
        h.meta = row_meta_[row];
        h.similarity = std::clamp(sim, 0.0, 1.0);
        hits.push_back(std::move(h));
    }
    return hits;
}

IndexStats TfidfIndex::stats() const {
    IndexStats s;
    s.num_rows = num_rows();
    s.vocabulary_size = vocab_size();
    s.nonzeros = val_.size();
    s.density = s.num_rows && s.vocabulary_size
                    ? static_cast<double>(s.nonzeros) /
                          (static_cast<double>(s.num_rows) * static_cast<double>(s.vocabulary_size))
                    : 0.0;
    return s;
}

double TfidfIndex::idf(const std::string& term) const {
    auto it = vocabulary_.find(term);
    if (it == vocabulary_.end()) throw validation_error("idf: unknown term '" + term + "'");
    return idf_[it->second];
}

std::vector<double> TfidfIndex::dense_row(std::size_t row) const {
    std::vector<double> out(vocab_size(), 0.0);
    for (std::uint64_t k = row_ptr_[row]; k < row_ptr_[row + 1]; ++k) out[col_[k]] = val_[k];
    return out;
}

namespace {
constexpr char kMagic[4] = {'R', 'K', 'I', 'X'};
}

void TfidfIndex::save(const std::filesystem::path& path, std::uint64_t config_hash) const {
    nlohmann::json header{{"kind", "tfidf-index"},
                          {"config_hash", config_hash},
                          {"rows", num_rows()},
                          {"vocabulary", vocab_size()}};
    binio::Writer w(path, kMagic, kFormatVersion, header);
    w.put_u64(terms_.size());
    for (const auto& t : terms_) w.put_string(t);
    w.put_doubles(idf_);
    w.put_u64(row_ptr_.size());
    for (auto v : row_ptr_) w.put_u64(v);
    w.put_u32s(col_);
    w.put_doubles(val_);
    w.finish();

    // JSON sidecar with row metadata.
    nlohmann::json meta = nlohmann::json::array();
    for (const auto& m : row_meta_)
        meta.push_back({{"pubmed_id", m.pubmed_id}, {"sentence_index", m.sentence_index}});
    jsonl::write_text_file(path.string() + ".meta.json",
                           nlohmann::json{{"config_hash", config_hash}, {"rows", meta}}.dump(2) + "\n");
}

TfidfIndex TfidfIndex::load(const std::filesystem::path& path) {
    binio::Reader r(path, kMagic, kFormatVersion);
    TfidfIndex idx;
    const std::uint64_t n_terms = r.get_u64();
    idx.terms_.reserve(n_terms);
    for (std::uint64_t i = 0; i < n_terms; ++i) {
        idx.terms_.push_back(r.get_string());
        idx.vocabulary_.emplace(idx.terms_.back(), static_cast<std::uint32_t>(i));
    }
    idx.idf_ = r.get_doubles();
    const std::uint64_t n_ptr = r.get_u64();
    idx.row_ptr_.reserve(n_ptr);
    for (std::uint64_t i = 0; i < n_ptr; ++i) idx.row_ptr_.push_back(r.get_u64());
    idx.col_ = r.get_u32s();
    idx.val_ = r.get_doubles();

    const std::string sidecar = jsonl::read_text_file(path.string() + ".meta.json");
    nlohmann::json meta = nlohmann::json::parse(sidecar, nullptr, false);
    if (meta.is_discarded() || !meta.contains("rows"))
        throw validation_error(path.string() + ".meta.json: corrupt row metadata sidecar");
    for (const auto& m : meta["rows"]) {
        RowMeta rm;
        rm.pubmed_id = m.at("pubmed_id").get<std::string>();
        rm.sentence_index = m.at("sentence_index").get<int>();
        idx.article_rows_[rm.pubmed_id].push_back(static_cast<std::uint32_t>(idx.row_meta_.size()));
        idx.row_meta_.push_back(std::move(rm));
    }
    if (idx.row_meta_.size() + 1 != idx.row_ptr_.size())
        throw validation_error(path.string() + ": row metadata does not match row count");
    idx.build_postings();
    return idx;
}

}  // namespace robkit::index
