#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "robkit/error.hpp"
#include "robkit/rng.hpp"
#include "robkit/tfidf_index.hpp"
#include "robkit/tokenize.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>

using namespace robkit;
using index::TfidfIndex;

namespace {

corpus::Article make_article(std::string id, const std::vector<std::string>& sentence_texts) {
    corpus::Article a;
    a.pubmed_id = std::move(id);
    std::size_t offset = 0;
    for (std::size_t i = 0; i < sentence_texts.size(); ++i) {
        corpus::Sentence s;
        s.index = i;
        s.text = sentence_texts[i];
        s.start = offset;
        s.end = offset + s.text.size();
        offset = s.end + 1;
        a.text += (i ? " " : "") + s.text;
        a.sentences.push_back(std::move(s));
    }
    return a;
}

// Independent dense tf-idf oracle over the same tokenizer.
struct DenseOracle {
    std::vector<std::string> vocab;
    std::vector<double> idf;
    std::vector<std::vector<double>> rows;            // L2-normalized
    std::vector<std::pair<std::string, int>> meta;    // (pubmed_id, sentence index)

    explicit DenseOracle(const std::vector<corpus::Article>& articles) {
        std::vector<std::vector<std::string>> token_lists;
        for (const auto& a : articles)
            for (const auto& s : a.sentences) {
                token_lists.push_back(tokenize(s.text));
                meta.emplace_back(a.pubmed_id, static_cast<int>(s.index));
            }
        std::set<std::string> terms;
        for (const auto& ts : token_lists) terms.insert(ts.begin(), ts.end());
        vocab.assign(terms.begin(), terms.end());

        const double n = static_cast<double>(token_lists.size());
        idf.resize(vocab.size());
        for (std::size_t t = 0; t < vocab.size(); ++t) {
            double df = 0.0;
            for (const auto& ts : token_lists)
                if (std::find(ts.begin(), ts.end(), vocab[t]) != ts.end()) df += 1.0;
            idf[t] = std::log((1.0 + n) / (1.0 + df)) + 1.0;
        }
        for (const auto& ts : token_lists) rows.push_back(vectorize(ts));
    }

    std::vector<double> vectorize(const std::vector<std::string>& tokens) const {
        std::vector<double> v(vocab.size(), 0.0);
        for (const auto& tok : tokens) {
            auto it = std::lower_bound(vocab.begin(), vocab.end(), tok);
            if (it != vocab.end() && *it == tok)
                v[static_cast<std::size_t>(it - vocab.begin())] += 1.0;
        }
        double norm = 0.0;
        for (std::size_t t = 0; t < v.size(); ++t) {
            v[t] *= idf[t];
            norm += v[t] * v[t];
        }
        if (norm > 0.0)
            for (auto& x : v) x /= std::sqrt(norm);
        return v;
    }

    // Full ranking by (similarity desc, meta asc), zero scores dropped.
    std::vector<std::pair<std::size_t, double>> rank(const std::string& query) const {
        const auto q = vectorize(tokenize(query));
        std::vector<std::pair<std::size_t, double>> scored;
        for (std::size_t r = 0; r < rows.size(); ++r) {
            double s = 0.0;
            for (std::size_t t = 0; t < q.size(); ++t) s += q[t] * rows[r][t];
            if (s > 0.0) scored.emplace_back(r, s);
        }
        std::sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return meta[a.first] < meta[b.first];
        });
        return scored;
    }
};

}  // namespace

TEST_CASE("identical sentences get identical rows with cosine 1") {
    const auto idx = TfidfIndex::build({make_article("a", {"the trial was blinded",
                                                           "the trial was blinded"})});
    const auto r0 = idx.dense_row(0);
    const auto r1 = idx.dense_row(1);
    CHECK(r0 == r1);
    CHECK(index::cosine(r0, r1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("disjoint vocabularies give cosine 0") {
    const auto idx = TfidfIndex::build({make_article("a", {"alpha beta gamma", "delta epsilon zeta"})});
    CHECK(index::cosine(idx.dense_row(0), idx.dense_row(1)) == doctest::Approx(0.0));
}

TEST_CASE("3-sentence toy corpus matches the dense oracle") {
    const std::vector<corpus::Article> articles{make_article(
        "a", {"patients were randomized", "patients were blinded", "outcomes were assessed"})};
    const auto idx = TfidfIndex::build(articles);
    const DenseOracle oracle(articles);

    REQUIRE(idx.vocab_size() == oracle.vocab.size());
    for (std::size_t t = 0; t < oracle.vocab.size(); ++t)
        CHECK(idx.idf(oracle.vocab[t]) == doctest::Approx(oracle.idf[t]).epsilon(1e-12));
    for (std::size_t r = 0; r < 3; ++r) {
        const auto got = idx.dense_row(r);
        for (std::size_t t = 0; t < got.size(); ++t)
            CHECK(got[t] == doctest::Approx(oracle.rows[r][t]).epsilon(1e-12));
    }
    // Row norms are 1 (or 0).
    for (std::size_t r = 0; r < 3; ++r) {
        double norm = 0.0;
        for (double v : idx.dense_row(r)) norm += v * v;
        CHECK(norm == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("query for an indexed sentence returns it first with similarity 1") {
    const auto idx = TfidfIndex::build({make_article(
        "a", {"patients were randomized to placebo", "allocation was concealed in envelopes"})});
    const auto hits = idx.query("allocation was concealed in envelopes", 2);
    REQUIRE(!hits.empty());
    CHECK(hits[0].meta.sentence_index == 1);
    CHECK(hits[0].similarity == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("out-of-vocabulary query returns the empty list, not an error") {
    const auto idx = TfidfIndex::build({make_article("a", {"patients were randomized"})});
    CHECK(idx.query("zzz qqq", 5).empty());
    CHECK_THROWS_AS(idx.query("patients", 0), Error);
}

TEST_CASE("paraphrase ranking equals the exhaustive oracle on a 5-sentence corpus") {
    const std::vector<corpus::Article> articles{
        make_article("a", {"the allocation sequence was computer generated",
                           "participants and staff were blinded to treatment",
                           "randomization used sealed opaque envelopes",
                           "outcome assessors did not know the assignment",
                           "twelve patients withdrew before follow up"})};
    const auto idx = TfidfIndex::build(articles);
    const DenseOracle oracle(articles);

    const std::string query = "sealed envelopes were used for the randomization";
    const auto hits = idx.query(query, 5);
    const auto expected = oracle.rank(query);
    REQUIRE(hits.size() == expected.size());
    for (std::size_t i = 0; i < hits.size(); ++i) {
        CHECK(hits[i].meta.sentence_index == oracle.meta[expected[i].first].second);
        CHECK(hits[i].similarity == doctest::Approx(expected[i].second).epsilon(1e-9));
    }
}

TEST_CASE("search equals oracle over random corpora up to 200 sentences") {
    Rng rng(777);
    static const char* words[] = {"trial", "blind", "random", "dose",  "placebo",
                                  "group", "assay", "risk",   "event", "followup"};
    for (int round = 0; round < 10; ++round) {
        std::vector<corpus::Article> articles;
        const int n_articles = 2 + static_cast<int>(rng.next_below(3));
        for (int a = 0; a < n_articles; ++a) {
            std::vector<std::string> sentences;
            const int n_sents = 5 + static_cast<int>(rng.next_below(60));
            for (int s = 0; s < n_sents; ++s) {
                std::string text;
                const int n_words = 3 + static_cast<int>(rng.next_below(8));
                for (int w = 0; w < n_words; ++w) {
                    if (w) text += ' ';
                    text += words[rng.next_below(10)];
                }
                sentences.push_back(text);
            }
            articles.push_back(make_article("pm" + std::to_string(a), sentences));
        }
        const auto idx = TfidfIndex::build(articles);
        const DenseOracle oracle(articles);

        std::map<std::pair<std::string, int>, std::size_t> row_of;
        for (std::size_t r = 0; r < oracle.meta.size(); ++r) row_of[oracle.meta[r]] = r;

        for (int q = 0; q < 5; ++q) {
            std::string query;
            const int n_words = 2 + static_cast<int>(rng.next_below(6));
            for (int w = 0; w < n_words; ++w) {
                if (w) query += ' ';
                query += words[rng.next_below(10)];
            }
            const auto hits = idx.query(query, 1000);
            const auto expected = oracle.rank(query);
            REQUIRE(hits.size() == expected.size());

            std::map<std::size_t, double> oracle_score;
            for (const auto& [row, sim] : expected) oracle_score[row] = sim;

            // Same rows with matching scores; the ranking must agree with the
            // oracle group-by-group, where a group is a maximal run of
            // oracle-tied scores (exact ties may resolve in either method's
            // summation order, both of which are valid orderings).
            for (std::size_t i = 0; i < hits.size(); ++i) {
                const std::size_t row = row_of.at({hits[i].meta.pubmed_id,
                                                   hits[i].meta.sentence_index});
                REQUIRE(oracle_score.count(row));
                CHECK(hits[i].similarity == doctest::Approx(oracle_score[row]).epsilon(1e-9));
            }
            std::size_t lo = 0;
            while (lo < expected.size()) {
                std::size_t hi = lo;
                while (hi + 1 < expected.size() &&
                       std::fabs(expected[hi + 1].second - expected[lo].second) <= 1e-9)
                    ++hi;
                std::multiset<std::size_t> want, got;
                for (std::size_t i = lo; i <= hi; ++i) {
                    want.insert(expected[i].first);
                    got.insert(row_of.at({hits[i].meta.pubmed_id, hits[i].meta.sentence_index}));
                }
                CHECK(want == got);
                lo = hi + 1;
            }
        }
    }
}

TEST_CASE("cosine symmetry and scale invariance on constructed vectors") {
    Rng rng(4242);
    for (int i = 0; i < 50; ++i) {
        std::vector<double> a(16), b(16);
        for (auto& v : a) v = rng.uniform(0.0, 1.0);
        for (auto& v : b) v = rng.uniform(0.0, 1.0);
        CHECK(std::fabs(index::cosine(a, b) - index::cosine(b, a)) <= 1e-12);
    }
    // Duplicating a coordinate's magnitude in both query and document scales
    // both vectors the same way; relative order against a third vector holds.
    std::vector<double> q{1.0, 2.0, 0.0};
    std::vector<double> d1{1.0, 2.0, 0.5};
    std::vector<double> d2{0.0, 1.0, 3.0};
    const bool before = index::cosine(q, d1) > index::cosine(q, d2);
    std::vector<double> q2{2.0, 4.0, 0.0};   // scaled query
    std::vector<double> d1_2{2.0, 4.0, 1.0}; // same doc scaled
    const bool after = index::cosine(q2, d1_2) > index::cosine(q2, d2);
    CHECK(before == after);
    CHECK(index::cosine(q, d1) == doctest::Approx(index::cosine(q2, d1_2)).epsilon(1e-12));
}

TEST_CASE("restricting the search to one article filters rows") {
    const std::vector<corpus::Article> articles{
        make_article("pm1", {"patients were randomized to placebo"}),
        make_article("pm2", {"patients were randomized to placebo"})};
    const auto idx = TfidfIndex::build(articles);

    const auto all = idx.query("patients were randomized", 10);
    CHECK(all.size() == 2);
    const auto only2 = idx.query("patients were randomized", 10, std::optional<std::string>("pm2"));
    REQUIRE(only2.size() == 1);
    CHECK(only2[0].meta.pubmed_id == "pm2");
    CHECK(idx.query("patients", 10, std::optional<std::string>("absent")).empty());
}

TEST_CASE("empty corpus is an error") {
    CHECK_THROWS_AS(TfidfIndex::build({}), Error);
    CHECK_THROWS_AS(TfidfIndex::build({make_article("a", {"..."})}), Error);
}

TEST_CASE("token-free sentences become all-zero rows that never match") {
    const auto idx = TfidfIndex::build({make_article("a", {"patients were randomized", "..."})});
    REQUIRE(idx.num_rows() == 2);
    const auto zero_row = idx.dense_row(1);
    for (double v : zero_row) CHECK(v == 0.0);
    // Norm invariant: rows are unit-length or all-zero.
    double norm = 0.0;
    for (double v : idx.dense_row(0)) norm += v * v;
    CHECK(norm == doctest::Approx(1.0).epsilon(1e-9));
    const auto hits = idx.query("patients were randomized", 10);
    REQUIRE(hits.size() == 1);
    CHECK(hits[0].meta.sentence_index == 0);
}

TEST_CASE("save/load round trip and stats") {
    const std::vector<corpus::Article> articles{
        make_article("pm1", {"alpha beta", "beta gamma delta"})};
    const auto idx = TfidfIndex::build(articles);

    const auto dir = std::filesystem::temp_directory_path() / "robkit_index_test";
    std::filesystem::create_directories(dir);
    const auto path = dir / "test.idx";
    idx.save(path, 0xDEADBEEF);

    const auto loaded = TfidfIndex::load(path);
    CHECK(loaded.num_rows() == idx.num_rows());
    CHECK(loaded.vocab_size() == idx.vocab_size());
    const auto hits = loaded.query("beta", 10);
    const auto orig = idx.query("beta", 10);
    REQUIRE(hits.size() == orig.size());
    for (std::size_t i = 0; i < hits.size(); ++i) {
        CHECK(hits[i].meta.sentence_index == orig[i].meta.sentence_index);
        CHECK(hits[i].similarity == doctest::Approx(orig[i].similarity).epsilon(1e-15));
    }

    const auto stats = idx.stats();
    CHECK(stats.num_rows == 2);
    CHECK(stats.vocabulary_size == 4);
    CHECK(stats.nonzeros == 5);
    CHECK(stats.density == doctest::Approx(5.0 / 8.0));

    std::filesystem::remove_all(dir);
}
