#include "robkit/corpus.hpp"

#include "robkit/error.hpp"
#include "robkit/jsonl.hpp"
#include "robkit/utf8.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <set>
#include <string>

namespace robkit::corpus {

namespace {

bool is_space_cp(char32_t c) {
    return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r' || c == U'\f' || c == U'\v' ||
           c == 0x00A0;
}

bool is_upper_cp(char32_t c) { return c >= U'A' && c <= U'Z'; }
bool is_digit_cp(char32_t c) { return c >= U'0' && c <= U'9'; }
bool is_alpha_cp(char32_t c) {
    return (c >= U'a' && c <= U'z') || (c >= U'A' && c <= U'Z');
}

bool is_closer_cp(char32_t c) {
    return c == U'"' || c == U'\'' || c == U')' || c == U']' || c == 0x2019 /* right single */ ||
           c == 0x201D /* right double */ || c == 0x00BB;
}

bool is_opener_cp(char32_t c) {
    return c == U'"' || c == U'\'' || c == U'(' || c == U'[' || c == 0x2018 || c == 0x201C ||
           c == 0x00AB;
}

// Abbreviations that end with a period but do not end a sentence. Lowercased,
// stored without the final period. Dotted forms like "e.g." keep inner dots.
const std::set<std::string>& abbreviations() {
    static const std::set<std::string> kAbbrev = {
        "al",   "vs",   "fig",  "figs", "dr",   "mr",   "mrs", "ms",   "prof", "st",
        "jr",   "sr",   "e.g",  "i.e",  "etc",  "ca",   "cf",  "resp", "approx",
        "vol",  "no",   "eq",   "eqs",  "ref",  "refs", "sec", "med",  "rev",
        "dept", "univ", "inc",  "ltd",  "co"};
    return kAbbrev;
}

// Word (letters and inner dots) immediately preceding position `i`, lowercased.
std::string word_before(const std::vector<char32_t>& cps, std::size_t i) {
    std::string out;
    std::size_t j = i;
    std::vector<char32_t> collected;
    while (j > 0) {
        char32_t c = cps[j - 1];
        if (is_alpha_cp(c) || (c == U'.' && !collected.empty())) {
            collected.push_back(c >= U'A' && c <= U'Z' ? c + 32 : c);
            --j;
        } else {
            break;
        }
    }
    std::reverse(collected.begin(), collected.end());
    for (char32_t c : collected) utf8::append(out, c);
    return out;
}

}  // namespace

std::vector<Sentence> segment_sentences(std::string_view text) {
    const std::vector<char32_t> cps = utf8::decode(text);
    const std::size_t n = cps.size();

    // Mark boundary positions: index just past the last code point of each sentence.
    std::vector<std::size_t> boundaries;
    for (std::size_t i = 0; i < n; ++i) {
        char32_t c = cps[i];
        if (c == U'.' || c == U'!' || c == U'?') {
            std::size_t j = i + 1;
            while (j < n && is_closer_cp(cps[j])) ++j;
            // A break needs trailing whitespace or end of text.
            if (j < n && !is_space_cp(cps[j])) continue;
            if (c == U'.') {
                const std::string prev = word_before(cps, i);
                if (abbreviations().count(prev)) continue;
                // Capitalization lookahead: require an upper-case letter,
                // digit, or opener as the next non-space character.
                std::size_t k = j;
                while (k < n && is_space_cp(cps[k])) ++k;
                if (k < n && !(is_upper_cp(cps[k]) || is_digit_cp(cps[k]) || is_opener_cp(cps[k])))
                    continue;
            }
            boundaries.push_back(j);
            i = j - 1;
        } else if (c == U'\n') {
            // Blank line forces a paragraph boundary.
            std::size_t j = i + 1;
            while (j < n && (cps[j] == U' ' || cps[j] == U'\t' || cps[j] == U'\r')) ++j;
            if (j < n && cps[j] == U'\n') boundaries.push_back(i);
        }
    }
    boundaries.push_back(n);

    std::vector<Sentence> sentences;
    std::size_t cursor = 0;
    for (std::size_t b : boundaries) {
        if (b < cursor) continue;
        // Trim whitespace on both sides of [cursor, b).
        std::size_t s = cursor;
        while (s < b && is_space_cp(cps[s])) ++s;
        std::size_t e = b;
        while (e > s && is_space_cp(cps[e - 1])) --e;
        if (e > s) {
            Sentence sent;
            sent.index = sentences.size();
            sent.start = s;
            sent.end = e;
            std::string t;
            for (std::size_t k = s; k < e; ++k) utf8::append(t, cps[k]);
            sent.text = std::move(t);
            sentences.push_back(std::move(sent));
        }
        cursor = b;
    }
    return sentences;
}

namespace {

// --- Minimal article-XML scanner -------------------------------------------
// Extracts the title and flattened body text. Understands elements, entities,
// comments, CDATA, processing instructions and DOCTYPE. Anything inside
// table/figure/reference subtrees is dropped and counted.

struct XmlExtractor {
    std::string_view src;
    std::size_t pos = 0;
    IngestStats stats;
    std::string title;
    std::vector<std::string> paragraphs;
    std::string current;           // text of the paragraph being accumulated
    std::vector<std::string> tag_stack;
    int skip_depth = 0;            // >0 while inside a dropped subtree
    bool in_title = false;
    bool title_done = false;
    bool saw_body_tag = false;
    bool in_body = false;

    [[noreturn]] void fail(const std::string& what) const {
        throw validation_error("XML parse error at byte " + std::to_string(pos) + ": " + what);
    }

    static bool is_name_char(char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == ':' ||
               c == '.';
    }

    static std::string lower(std::string s) {
        std::transform(s.begin(), s.end(), s.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        return s;
    }

    bool starts_with(std::string_view prefix) const {
        return src.substr(pos, prefix.size()) == prefix;
    }

    static bool is_dropped_tag(const std::string& tag) {
        return tag == "table" || tag == "table-wrap" || tag == "tbody" || tag == "fig" ||
               tag == "figure" || tag == "graphic" || tag == "ref-list" || tag == "references";
    }

    static bool is_block_tag(const std::string& tag) {
        return tag == "p" || tag == "sec" || tag == "title" || tag == "abstract" ||
               tag == "body" || tag == "article-title" || tag == "caption" || tag == "div" ||
               tag == "list-item" || tag == "h1" || tag == "h2" || tag == "h3";
    }

    void flush_paragraph() {
        // Collapse internal whitespace runs and trim.
        std::string out;
        bool pending_space = false;
        for (char c : current) {
            if (std::isspace(static_cast<unsigned char>(c))) {
                pending_space = !out.empty();
            } else {
                if (pending_space) out.push_back(' ');
                pending_space = false;
                out.push_back(c);
            }
        }
        if (!out.empty()) paragraphs.push_back(std::move(out));
        current.clear();
    }

    void emit_text(std::string_view t) {
        if (skip_depth > 0) return;
        if (in_title && !title_done) {
            title += t;
            return;
        }
        if (saw_body_tag && !in_body) return;
        current += t;
    }

    std::string decode_entity() {
        // pos is at '&'. Returns the decoded text, advances past ';'.
        std::size_t semi = src.find(';', pos);
        if (semi == std::string_view::npos || semi - pos > 12) fail("unterminated entity");
        std::string name(src.substr(pos + 1, semi - pos - 1));
        pos = semi + 1;
        if (name == "amp") return "&";
        if (name == "lt") return "<";
        if (name == "gt") return ">";
        if (name == "quot") return "\"";
        if (name == "apos") return "'";
        if (!name.empty() && name[0] == '#') {
            char32_t cp = 0;
            try {
                cp = (name.size() > 1 && (name[1] == 'x' || name[1] == 'X'))
                         ? static_cast<char32_t>(std::stoul(name.substr(2), nullptr, 16))
                         : static_cast<char32_t>(std::stoul(name.substr(1), nullptr, 10));
            } catch (...) {
                fail("bad character reference &" + name + ";");
            }
            std::string out;
            utf8::append(out, cp);
            return out;
        }
        // Unknown named entity: keep it verbatim so nothing silently vanishes.
        return "&" + name + ";";
    }

    void run() {
        while (pos < src.size()) {
            if (src[pos] == '<') {
                handle_markup();
            } else if (src[pos] == '&') {
                std::string decoded = decode_entity();
                emit_text(decoded);
            } else {
                std::size_t next = src.find_first_of("<&", pos);
                if (next == std::string_view::npos) next = src.size();
                emit_text(src.substr(pos, next - pos));
                pos = next;
            }
        }
        if (!tag_stack.empty()) fail("unexpected end of input; unclosed <" + tag_stack.back() + ">");
        flush_paragraph();
    }

    void handle_markup() {
        if (starts_with("<!--")) {
            std::size_t end = src.find("-->", pos + 4);
            if (end == std::string_view::npos) fail("unterminated comment");
            pos = end + 3;
            return;
        }
        if (starts_with("<![CDATA[")) {
            std::size_t end = src.find("]]>", pos + 9);
            if (end == std::string_view::npos) fail("unterminated CDATA section");
            emit_text(src.substr(pos + 9, end - pos - 9));
            pos = end + 3;
            return;
        }
        if (starts_with("<!")) {
            // DOCTYPE and friends; tolerate one level of [] nesting.
            std::size_t i = pos + 2;
            int bracket = 0;
            for (; i < src.size(); ++i) {
                if (src[i] == '[') ++bracket;
                else if (src[i] == ']') --bracket;
                else if (src[i] == '>' && bracket == 0) break;
            }
            if (i >= src.size()) fail("unterminated <! ... > declaration");
            pos = i + 1;
            return;
        }
        if (starts_with("<?")) {
            std::size_t end = src.find("?>", pos + 2);
            if (end == std::string_view::npos) fail("unterminated processing instruction");
            pos = end + 2;
            return;
        }
        // Element tag.
        std::size_t tag_start = pos;
        ++pos;
        bool closing = false;
        if (pos < src.size() && src[pos] == '/') {
            closing = true;
            ++pos;
        }
        std::size_t name_begin = pos;
        while (pos < src.size() && is_name_char(src[pos])) ++pos;
        if (pos == name_begin) fail("expected tag name");
        std::string name = lower(std::string(src.substr(name_begin, pos - name_begin)));
        // Scan to '>' honoring quoted attribute values.
        bool self_closing = false;
        char quote = 0;
        while (pos < src.size()) {
            char c = src[pos];
            if (quote) {
                if (c == quote) quote = 0;
            } else if (c == '"' || c == '\'') {
                quote = c;
            } else if (c == '>') {
                break;
            } else if (c == '/' && pos + 1 < src.size() && src[pos + 1] == '>') {
                self_closing = true;
            }
            ++pos;
        }
        if (pos >= src.size()) {
            pos = tag_start;
            fail("unterminated tag <" + name + ">");
        }
        ++pos;  // consume '>'

        if (closing) {
            if (tag_stack.empty() || tag_stack.back() != name) {
                pos = tag_start;
                fail("mismatched closing tag </" + name + ">");
            }
            tag_stack.pop_back();
            close_tag(name);
        } else if (self_closing) {
            if (skip_depth == 0 && name == "break") emit_text("\n");
        } else {
            tag_stack.push_back(name);
            open_tag(name);
        }
    }

    void open_tag(const std::string& name) {
        if (skip_depth > 0 || is_dropped_tag(name)) {
            if (skip_depth == 0) {
                if (name == "table" || name == "table-wrap" || name == "tbody")
                    ++stats.dropped_tables;
                else if (name == "fig" || name == "figure" || name == "graphic")
                    ++stats.dropped_figures;
                else
                    ++stats.dropped_ref_lists;
            }
            ++skip_depth;
            return;
        }
        if (name == "body") {
            saw_body_tag = true;
            in_body = true;
        }
        if (!title_done && (name == "article-title" || (name == "title" && title.empty() && !saw_body_tag))) {
            in_title = true;
        }
        if (is_block_tag(name)) flush_paragraph();
    }

    void close_tag(const std::string& name) {
        if (skip_depth > 0) {
            --skip_depth;
            return;
        }
        if (in_title && (name == "article-title" || name == "title")) {
            in_title = false;
            if (!title.empty()) title_done = true;
        }
        if (name == "body") in_body = false;
        if (is_block_tag(name)) flush_paragraph();
    }
};

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

}  // namespace

Article ingest_article(std::string_view raw, InputFormat format, std::string pubmed_id,
                       IngestStats* stats) {
    if (!utf8::is_valid(raw))
        throw validation_error("article " + pubmed_id + ": input is not valid UTF-8");

    Article article;
    article.pubmed_id = std::move(pubmed_id);

    if (format == InputFormat::PlainText) {
        article.text = trim(raw);
    } else {
        XmlExtractor ex;
        ex.src = raw;
        ex.run();
        if (stats) {
            stats->dropped_tables += ex.stats.dropped_tables;
            stats->dropped_figures += ex.stats.dropped_figures;
            stats->dropped_ref_lists += ex.stats.dropped_ref_lists;
        }
        article.title = trim(ex.title);
        std::string body;
        for (const auto& p : ex.paragraphs) {
            if (!body.empty()) body += "\n\n";
            body += p;
        }
        article.text = body;
    }

    if (article.text.empty())
        throw validation_error("article " + article.pubmed_id + ": empty document");

    article.sentences = segment_sentences(article.text);
    return article;
}

std::vector<Article> ingest_directory(const std::filesystem::path& dir, IngestStats* stats) {
    if (!std::filesystem::is_directory(dir))
        throw missing_input("article directory not found: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const auto ext = entry.path().extension().string();
        if (ext == ".txt" || ext == ".xml") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<Article> articles;
    articles.reserve(files.size());
    for (const auto& f : files) {
        const std::string raw = jsonl::read_text_file(f);
        const InputFormat fmt =
            f.extension() == ".xml" ? InputFormat::ArticleXml : InputFormat::PlainText;
        articles.push_back(ingest_article(raw, fmt, f.stem().string(), stats));
    }
    return articles;
}

nlohmann::json to_json(const Article& article) {
    nlohmann::json sents = nlohmann::json::array();
    for (const auto& s : article.sentences) {
        sents.push_back(nlohmann::json{
            {"index", s.index}, {"start", s.start}, {"end", s.end}, {"text", s.text}});
    }
    return nlohmann::json{
        {"pubmed_id", article.pubmed_id}, {"title", article.title}, {"sentences", sents}};
}

Article article_from_json(const nlohmann::json& j) {
    Article a;
    a.pubmed_id = j.at("pubmed_id").get<std::string>();
    a.title = j.value("title", "");
    for (const auto& js : j.at("sentences")) {
        Sentence s;
        s.index = js.at("index").get<std::size_t>();
        s.start = js.at("start").get<std::size_t>();
        s.end = js.at("end").get<std::size_t>();
        s.text = js.at("text").get<std::string>();
        a.sentences.push_back(std::move(s));
    }
    return a;
}

void write_articles_jsonl(const std::filesystem::path& path, const std::vector<Article>& articles) {
    std::vector<nlohmann::json> rows;
    rows.reserve(articles.size());
    for (const auto& a : articles) rows.push_back(to_json(a));
    jsonl::write_file(path, rows);
}

std::vector<Article> read_articles_jsonl(const std::filesystem::path& path) {
    std::vector<Article> out;
    jsonl::for_each(path, [&](const nlohmann::json& j, std::size_t) {
        out.push_back(article_from_json(j));
    });
    return out;
}

}  // namespace robkit::corpus
