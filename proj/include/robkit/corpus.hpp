#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace robkit::corpus {

// Offsets are Unicode scalar-value offsets into the article's flattened text.
struct Sentence {
    std::size_t index = 0;
    std::string text;
    std::size_t start = 0;
    std::size_t end = 0;  // exclusive; text == source[start..end)
};

struct Article {
    std::string pubmed_id;
    std::string title;
    std::string text;  // flattened body text the sentence offsets refer to
    std::vector<Sentence> sentences;
};

enum class InputFormat { PlainText, ArticleXml };

struct IngestStats {
    std::size_t dropped_tables = 0;
    std::size_t dropped_figures = 0;
    std::size_t dropped_ref_lists = 0;
};

// Rule-based sentence splitter: terminal punctuation (. ! ?) optionally
// followed by closing quotes/brackets, then whitespace; a following capital
// letter or digit confirms the break for '.', while '!' and '?' always break.
// A closed abbreviation list ("et al.", "vs.", "Fig.", ...) suppresses
// breaking, and blank lines force a boundary. Total and deterministic.
std::vector<Sentence> segment_sentences(std::string_view text);

// Parses raw bytes into an Article. Plain text keeps the whole input as body
// (title empty). Article XML extracts <article-title>/<title> and the body
// text; table/figure/reference subtrees are dropped and counted in stats.
// Throws: validation error naming the byte offset on malformed XML, and an
// empty-document error when no body text survives.
Article ingest_article(std::string_view raw, InputFormat format, std::string pubmed_id,
                       IngestStats* stats = nullptr);

// Loads every `<pubmed_id>.txt` / `<pubmed_id>.xml` under a directory.
std::vector<Article> ingest_directory(const std::filesystem::path& dir, IngestStats* stats = nullptr);

nlohmann::json to_json(const Article& article);
Article article_from_json(const nlohmann::json& j);

void write_articles_jsonl(const std::filesystem::path& path, const std::vector<Article>& articles);
std::vector<Article> read_articles_jsonl(const std::filesystem::path& path);

}  // namespace robkit::corpus
