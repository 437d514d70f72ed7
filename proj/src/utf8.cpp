#include "robkit/utf8.hpp"

namespace robkit::utf8 {

namespace {

// Returns sequence length from the lead byte, 0 if it is not a valid lead.
inline int lead_len(unsigned char b) {
    if (b < 0x80) return 1;
    if ((b & 0xE0) == 0xC0) return 2;
    if ((b & 0xF0) == 0xE0) return 3;
    if ((b & 0xF8) == 0xF0) return 4;
    return 0;
}

inline bool is_cont(unsigned char b) { return (b & 0xC0) == 0x80; }

// Decodes one code point starting at s[i]; advances i. Returns U+FFFD and
// advances by one byte on malformed input.
char32_t decode_one(std::string_view s, std::size_t& i) {
    unsigned char b0 = static_cast<unsigned char>(s[i]);
    int len = lead_len(b0);
    if (len == 0 || i + static_cast<std::size_t>(len) > s.size()) {
        ++i;
        return 0xFFFD;
    }
    char32_t cp = 0;
    switch (len) {
        case 1:
            cp = b0;
            break;
        case 2:
            cp = b0 & 0x1F;
            break;
        case 3:
            cp = b0 & 0x0F;
            break;
        default:
            cp = b0 & 0x07;
            break;
    }
    for (int k = 1; k < len; ++k) {
        unsigned char b = static_cast<unsigned char>(s[i + static_cast<std::size_t>(k)]);
        if (!is_cont(b)) {
            ++i;
            return 0xFFFD;
        }
        cp = (cp << 6) | (b & 0x3F);
    }
    // Reject overlongs, surrogates, and out-of-range values.
    static constexpr char32_t kMin[5] = {0, 0, 0x80, 0x800, 0x10000};
    if (cp < kMin[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
        ++i;
        return 0xFFFD;
    }
    i += static_cast<std::size_t>(len);
    return cp;
}

}  // namespace

bool is_valid(std::string_view s) {
    std::size_t i = 0;
    while (i < s.size()) {
        unsigned char b0 = static_cast<unsigned char>(s[i]);
        int len = lead_len(b0);
        if (len == 0 || i + static_cast<std::size_t>(len) > s.size()) return false;
        char32_t cp = 0;
        switch (len) {
            case 1: cp = b0; break;
            case 2: cp = b0 & 0x1F; break;
            case 3: cp = b0 & 0x0F; break;
            default: cp = b0 & 0x07; break;
        }
        for (int k = 1; k < len; ++k) {
            unsigned char b = static_cast<unsigned char>(s[i + static_cast<std::size_t>(k)]);
            if (!is_cont(b)) return false;
            cp = (cp << 6) | (b & 0x3F);
        }
        static constexpr char32_t kMin[5] = {0, 0, 0x80, 0x800, 0x10000};
        if (cp < kMin[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return false;
        i += static_cast<std::size_t>(len);
    }
    return true;
}

std::size_t length(std::string_view s) {
    std::size_t n = 0, i = 0;
    while (i < s.size()) {
        decode_one(s, i);
        ++n;
    }
    return n;
}

std::vector<char32_t> decode(std::string_view s) {
    std::vector<char32_t> out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) out.push_back(decode_one(s, i));
    return out;
}

void append(std::string& out, char32_t cp) {
    if (cp <= 0x7F) {
        out.push_back(static_cast<char>(cp));
    } else if (cp <= 0x7FF) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp <= 0xFFFF) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

std::string encode(const std::vector<char32_t>& cps) {
    std::string out;
    out.reserve(cps.size());
    for (char32_t cp : cps) append(out, cp);
    return out;
}

std::size_t byte_offset(std::string_view s, std::size_t cp_index) {
    std::size_t i = 0, n = 0;
    while (i < s.size() && n < cp_index) {
        decode_one(s, i);
        ++n;
    }
    return i;
}

std::string substr(std::string_view s, std::size_t start, std::size_t end) {
    if (end <= start) return {};
    std::size_t b0 = byte_offset(s, start);
    std::size_t b1 = byte_offset(s, end);
    return std::string(s.substr(b0, b1 - b0));
}

}  // namespace robkit::utf8
