#pragma once

#include <string>
#include <string_view>
#include <vector>

// Tokenizer shared by the sentence index and the n-gram featurizer so both
// sides of the pipeline agree on term boundaries. Lowercases ASCII, keeps
// word tokens of ASCII alphanumerics plus non-ASCII letters (code points
// >= U+00C0 outside the general-punctuation block). No stemming, stopwords
// retained; supporting sentences are near-verbatim quotes, so raw lexical
// overlap is the signal.

namespace robkit {

std::vector<std::string> tokenize(std::string_view text);

// Token plus its character (code point) span in the source text; lets span
// predictions detokenize back to exact source slices.
struct TokenSpan {
    std::string text;
    std::size_t start = 0;
    std::size_t end = 0;
};

std::vector<TokenSpan> tokenize_spans(std::string_view text);

// n-grams over the token stream for n in [1, max_n], joined with single
// spaces ("allocation was concealed" -> "allocation was" etc.).
std::vector<std::string> ngrams(const std::vector<std::string>& tokens, int max_n);

}  // namespace robkit
