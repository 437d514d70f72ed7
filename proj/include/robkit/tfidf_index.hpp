#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "robkit/corpus.hpp"

namespace robkit::index {

struct RowMeta {
    std::string pubmed_id;
    int sentence_index = -1;
};

struct QueryHit {
    RowMeta meta;
    double similarity = 0.0;  // cosine in [0, 1]
};

struct IndexStats {
    std::size_t num_rows = 0;
    std::size_t vocabulary_size = 0;
    std::size_t nonzeros = 0;
    double density = 0.0;  // nnz / (rows * vocab)
};

// Sentence-level tf-idf index with cosine search.
//   idf(t) = ln((1+N)/(1+df(t))) + 1, N = sentence count
//   row weight = tf * idf, rows L2-normalized (all-zero rows allowed for
//   sentences with no tokens). Immutable after build; queries are const and
//   safe to run concurrently.
class TfidfIndex {
public:
    // Throws a validation error on an empty corpus (no non-empty sentence).
    static TfidfIndex build(const std::vector<corpus::Article>& articles, int num_threads = 0);

    // Ranked cosine search. Results sorted by similarity descending, ties by
    // (pubmed_id, sentence_index) ascending. A query with no known terms
    // returns an empty list. restrict_pubmed limits scoring to one article.
    std::vector<QueryHit> query(std::string_view text, std::size_t top_k,
                                const std::optional<std::string>& restrict_pubmed = std::nullopt) const;

    IndexStats stats() const;

    std::size_t num_rows() const { return row_ptr_.size() - 1; }
    std::size_t vocab_size() const { return vocabulary_.size(); }
    const RowMeta& row_meta(std::size_t row) const { return row_meta_[row]; }
    double idf(const std::string& term) const;

    // Dense copy of one row (vocab_size() long); oracle/test support.
    std::vector<double> dense_row(std::size_t row) const;

    // Builds the tf-idf query vector (L2-normalized, index idf). Returns
    // sorted (term_id, weight) pairs; unknown terms are dropped.
    std::vector<std::pair<std::uint32_t, double>> vectorize_query(std::string_view text) const;

    void save(const std::filesystem::path& path, std::uint64_t config_hash) const;
    static TfidfIndex load(const std::filesystem::path& path);
    static constexpr std::uint32_t kFormatVersion = 1;

private:
    TfidfIndex() = default;
    void build_postings();
    double cosine_against_row(const std::vector<std::pair<std::uint32_t, double>>& query_vec,
                              std::size_t row) const;

    std::map<std::string, std::uint32_t> vocabulary_;  // term -> dense id
    std::vector<std::string> terms_;                   // id -> term
    std::vector<double> idf_;
    // CSR rows, L2-normalized.
    std::vector<std::uint64_t> row_ptr_;
    std::vector<std::uint32_t> col_;
    std::vector<double> val_;
    std::vector<RowMeta> row_meta_;
    // term id -> (row, weight) postings for full-corpus scoring.
    std::vector<std::vector<std::pair<std::uint32_t, double>>> postings_;
    // pubmed_id -> row range(s) for restricted search.
    std::map<std::string, std::vector<std::uint32_t>> article_rows_;
};

// Plain cosine between two dense vectors; exposed for invariant tests.
double cosine(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace robkit::index
