#include "robkit/tokenize.hpp"

#include "robkit/utf8.hpp"

namespace robkit {

namespace {

bool is_word_cp(char32_t c) {
    if ((c >= U'a' && c <= U'z') || (c >= U'0' && c <= U'9')) return true;
    if (c >= U'A' && c <= U'Z') return true;
    if (c >= 0xC0 && !(c >= 0x2000 && c <= 0x206F)) return true;
    return false;
}

char32_t ascii_lower(char32_t c) { return (c >= U'A' && c <= U'Z') ? c + 32 : c; }

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (char32_t cp : utf8::decode(text)) {
        if (is_word_cp(cp)) {
            utf8::append(current, ascii_lower(cp));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

std::vector<TokenSpan> tokenize_spans(std::string_view text) {
    std::vector<TokenSpan> tokens;
    TokenSpan current;
    const auto cps = utf8::decode(text);
    for (std::size_t i = 0; i < cps.size(); ++i) {
        if (is_word_cp(cps[i])) {
            if (current.text.empty()) current.start = i;
            utf8::append(current.text, ascii_lower(cps[i]));
            current.end = i + 1;
        } else if (!current.text.empty()) {
            tokens.push_back(std::move(current));
            current = {};
        }
    }
    if (!current.text.empty()) tokens.push_back(std::move(current));
    return tokens;
}

std::vector<std::string> ngrams(const std::vector<std::string>& tokens, int max_n) {
    std::vector<std::string> out;
    const std::size_t n_tokens = tokens.size();
    for (int n = 1; n <= max_n; ++n) {
        if (n_tokens < static_cast<std::size_t>(n)) break;
        for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= n_tokens; ++i) {
            std::string gram = tokens[i];
            for (int k = 1; k < n; ++k) {
                gram += ' ';
                gram += tokens[i + static_cast<std::size_t>(k)];
            }
            out.push_back(std::move(gram));
        }
    }
    return out;
}

}  // namespace robkit
