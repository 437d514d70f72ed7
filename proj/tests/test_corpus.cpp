#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "robkit/corpus.hpp"
#include "robkit/error.hpp"
#include "robkit/rng.hpp"
#include "robkit/utf8.hpp"

#include <string>
#include <vector>

using namespace robkit;
using corpus::Article;
using corpus::Sentence;

namespace {

// Oracle: rebuild the source from sentence offsets plus the recorded gaps and
// compare byte-for-byte.
std::string reconstruct(const std::string& source, const std::vector<Sentence>& sentences) {
    const std::size_t total = utf8::length(source);
    std::string out;
    std::size_t cursor = 0;
    for (const auto& s : sentences) {
        out += utf8::substr(source, cursor, s.start);
        out += s.text;
        cursor = s.end;
    }
    out += utf8::substr(source, cursor, total);
    return out;
}

void check_offsets(const std::string& source, const std::vector<Sentence>& sentences) {
    std::size_t prev_end = 0;
    std::size_t expect_index = 0;
    for (const auto& s : sentences) {
        CHECK(s.end > s.start);
        CHECK(s.start >= prev_end);
        CHECK(s.index == expect_index++);
        CHECK(utf8::substr(source, s.start, s.end) == s.text);
        prev_end = s.end;
    }
    CHECK(reconstruct(source, sentences) == source);
}

std::string random_text(Rng& rng) {
    static const char* words[] = {"patients", "trial",  "blinded", "outcome", "randomized",
                                  "the",      "et al.", "Fig.",    "2.5",     "assessor"};
    static const char* punct[] = {". ", "! ", "? ", ", ", " ", ".\n\n", "; "};
    std::string text;
    const int n = 1 + static_cast<int>(rng.next_below(60));
    for (int i = 0; i < n; ++i) {
        std::string w = words[rng.next_below(10)];
        if (rng.next_below(3) == 0 && !w.empty()) w[0] = static_cast<char>(std::toupper(w[0]));
        text += w;
        text += punct[rng.next_below(7)];
    }
    return text;
}

}  // namespace

TEST_CASE("segmentation splits on terminal punctuation with capital lookahead") {
    const std::string text = "Patients were randomized. Allocation was concealed.";
    const auto sents = corpus::segment_sentences(text);
    REQUIRE(sents.size() == 2);
    CHECK(sents[0].text == "Patients were randomized.");
    CHECK(sents[0].start == 0);
    // Hand-count oracle: the second sentence starts where "Allocation" does.
    CHECK(sents[1].start == utf8::length(text.substr(0, text.find("Allocation"))));
    check_offsets(text, sents);
}

TEST_CASE("single capitals split but abbreviations do not") {
    CHECK(corpus::segment_sentences("A. B. C.").size() == 3);
    CHECK(corpus::segment_sentences("Smith et al. reported X.").size() == 1);
    CHECK(corpus::segment_sentences("See Fig. 3 for details.").size() == 1);
    CHECK(corpus::segment_sentences("Dose was 2.5 mg daily.").size() == 1);
    CHECK(corpus::segment_sentences("").empty());
}

TEST_CASE("idempotence: a segmented sentence stays one sentence") {
    const auto first = corpus::segment_sentences("Allocation was concealed until assignment.");
    REQUIRE(first.size() == 1);
    const auto again = corpus::segment_sentences(first[0].text);
    REQUIRE(again.size() == 1);
    CHECK(again[0].text == first[0].text);
}

TEST_CASE("offset round-trip on random texts") {
    Rng rng(991);
    for (int trial = 0; trial < 200; ++trial) {
        const std::string text = random_text(rng);
        const auto sents = corpus::segment_sentences(text);
        check_offsets(text, sents);
        // Determinism across repeated runs.
        const auto again = corpus::segment_sentences(text);
        REQUIRE(again.size() == sents.size());
        for (std::size_t i = 0; i < sents.size(); ++i) {
            CHECK(again[i].start == sents[i].start);
            CHECK(again[i].end == sents[i].end);
        }
    }
}

TEST_CASE("plain text ingestion") {
    const auto article = corpus::ingest_article("A. B. C.", corpus::InputFormat::PlainText, "p1");
    CHECK(article.pubmed_id == "p1");
    CHECK(article.title.empty());
    CHECK(article.sentences.size() == 3);

    CHECK_THROWS_AS(corpus::ingest_article("", corpus::InputFormat::PlainText, "p2"), Error);
    CHECK_THROWS_WITH_AS(corpus::ingest_article("   \n  ", corpus::InputFormat::PlainText, "p3"),
                         doctest::Contains("empty document"), Error);
}

TEST_CASE("xml ingestion: 5 paragraphs of 2 sentences -> 10 sentences") {
    std::string xml = "<article><front><article-title>A trial of X.</article-title></front><body>";
    for (int p = 0; p < 5; ++p)
        xml += "<p>Patients were enrolled at site " + std::to_string(p) +
               ". Outcomes were measured daily.</p>";
    xml += "<table-wrap><table><tr><td>dropped cell</td></tr></table></table-wrap>";
    xml += "<fig><caption><p>dropped figure caption.</p></caption></fig>";
    xml += "</body></article>";

    corpus::IngestStats stats;
    const auto article = corpus::ingest_article(xml, corpus::InputFormat::ArticleXml, "x1", &stats);
    CHECK(article.title == "A trial of X.");
    CHECK(article.sentences.size() == 10);
    CHECK(stats.dropped_tables >= 1);
    CHECK(stats.dropped_figures >= 1);
    CHECK(article.text.find("dropped") == std::string::npos);
    check_offsets(article.text, article.sentences);
}

TEST_CASE("xml entities and cdata decode into text") {
    const std::string xml =
        "<article><body><p>Risk &amp; benefit &#x3b1; level. <![CDATA[Second sentence here.]]>"
        "</p></body></article>";
    const auto article = corpus::ingest_article(xml, corpus::InputFormat::ArticleXml, "x2");
    CHECK(article.text.find("Risk & benefit") != std::string::npos);
    CHECK(article.text.find("\xCE\xB1") != std::string::npos);
    CHECK(article.text.find("Second sentence here.") != std::string::npos);
}

TEST_CASE("malformed xml reports a byte offset") {
    CHECK_THROWS_WITH_AS(
        corpus::ingest_article("<article><p>text</div></article>", corpus::InputFormat::ArticleXml,
                               "bad"),
        doctest::Contains("byte"), Error);
    CHECK_THROWS_AS(corpus::ingest_article("<article><p>unclosed", corpus::InputFormat::ArticleXml,
                                           "bad2"),
                    Error);
    CHECK_THROWS_AS(corpus::ingest_article("\xFF\xFE not utf8", corpus::InputFormat::PlainText,
                                           "bad3"),
                    Error);
}

TEST_CASE("articles jsonl round trip preserves the schema fields") {
    const auto article = corpus::ingest_article(
        "Patients were randomized. Allocation was concealed.", corpus::InputFormat::PlainText, "p9");
    const auto j = corpus::to_json(article);
    CHECK(j.at("pubmed_id") == "p9");
    CHECK(j.at("sentences").size() == 2);
    CHECK(j.at("sentences")[0].contains("index"));
    CHECK(j.at("sentences")[0].contains("start"));
    CHECK(j.at("sentences")[0].contains("end"));
    CHECK(j.at("sentences")[0].contains("text"));

    const auto back = corpus::article_from_json(j);
    CHECK(back.pubmed_id == article.pubmed_id);
    REQUIRE(back.sentences.size() == article.sentences.size());
    CHECK(back.sentences[1].start == article.sentences[1].start);
    CHECK(back.sentences[1].text == article.sentences[1].text);
}
