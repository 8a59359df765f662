#pragma once

// Text normalization pipeline for post corpora. The pipeline runs in a
// fixed order: escape decoding, lowercasing, URL replacement, collapse of
// immediately repeated tokens, whitespace normalization. The composed
// preprocess() is idempotent: applying it twice equals applying it once.

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace erd::text {

inline constexpr std::string_view kUrlToken = "weblink";

// ---------------------------------------------------------------------------
// UTF-8 helpers
// ---------------------------------------------------------------------------

inline void append_utf8(std::string& out, char32_t cp) {
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

// Decodes the codepoint starting at byte i and advances i past it.
// Malformed bytes are passed through one at a time so no input can fault.
inline char32_t next_codepoint(std::string_view s, std::size_t& i) {
    const auto byte = [&](std::size_t k) { return static_cast<unsigned char>(s[k]); };
    const unsigned char b0 = byte(i);
    std::size_t len = 1;
    char32_t cp = b0;
    if ((b0 & 0x80) == 0x00) {
        len = 1;
    } else if ((b0 & 0xE0) == 0xC0) {
        len = 2;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        len = 3;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        len = 4;
        cp = b0 & 0x07;
    } else {
        ++i;
        return b0;
    }
    if (i + len > s.size()) {
        ++i;
        return b0;
    }
    for (std::size_t k = 1; k < len; ++k) {
        if ((byte(i + k) & 0xC0) != 0x80) {
            ++i;
            return b0;
        }
        cp = (cp << 6) | (byte(i + k) & 0x3F);
    }
    i += len;
    return cp;
}

// ---------------------------------------------------------------------------
// Stage 1: decode HTML entities and \uXXXX escapes
// ---------------------------------------------------------------------------

namespace detail {

struct NamedEntity {
    std::string_view name;  // lowercase, without & and ;
    char32_t cp;
};

// Entity names are matched case-insensitively so that lowercasing cannot
// surface a new decodable entity and break idempotence.
inline constexpr std::array<NamedEntity, 8> kNamedEntities{{
    {"amp", U'&'},
    {"lt", U'<'},
    {"gt", U'>'},
    {"quot", U'"'},
    {"apos", U'\''},
    {"nbsp", U' '},  // decoded to a plain space for token splitting
    {"laquo", U'«'},
    {"raquo", U'»'},
}};

inline char ascii_lower(char c) {
    return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

inline bool is_hex(char c) {
    return (c >= '0' && c <= '9') || (ascii_lower(c) >= 'a' && ascii_lower(c) <= 'f');
}

inline int hex_value(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    return ascii_lower(c) - 'a' + 10;
}

inline bool valid_scalar(char32_t cp) {
    return cp <= 0x10FFFF && !(cp >= 0xD800 && cp <= 0xDFFF);
}

// Tries to decode an entity starting at s[i] (s[i] == '&'). On success
// appends the decoded character and returns bytes consumed; 0 otherwise.
inline std::size_t try_entity(std::string_view s, std::size_t i, std::string& out) {
    const std::size_t semi = s.find(';', i + 1);
    if (semi == std::string_view::npos || semi == i + 1 || semi > i + 12) return 0;
    std::string_view body = s.substr(i + 1, semi - i - 1);
    if (body[0] == '#') {
        std::string_view digits = body.substr(1);
        char32_t cp = 0;
        bool ok = !digits.empty();
        if (!digits.empty() && (digits[0] == 'x' || digits[0] == 'X')) {
            digits.remove_prefix(1);
            ok = !digits.empty();
            for (char c : digits) {
                if (!is_hex(c)) { ok = false; break; }
                cp = cp * 16 + static_cast<char32_t>(hex_value(c));
                if (cp > 0x10FFFF) { ok = false; break; }
            }
        } else {
            for (char c : digits) {
                if (c < '0' || c > '9') { ok = false; break; }
                cp = cp * 10 + static_cast<char32_t>(c - '0');
                if (cp > 0x10FFFF) { ok = false; break; }
            }
        }
        if (!ok || !valid_scalar(cp)) return 0;
        append_utf8(out, cp);
        return semi - i + 1;
    }
    std::string lower;
    lower.reserve(body.size());
    for (char c : body) lower.push_back(ascii_lower(c));
    for (const auto& e : kNamedEntities) {
        if (lower == e.name) {
            append_utf8(out, e.cp);
            return semi - i + 1;
        }
    }
    return 0;
}

// Tries to decode a \uXXXX escape (with surrogate pair lookahead) starting
// at s[i] (s[i] == '\\'). Returns bytes consumed, 0 if not an escape.
inline std::size_t try_unicode_escape(std::string_view s, std::size_t i, std::string& out) {
    const auto read4 = [&](std::size_t at, char32_t& val) {
        if (at + 4 > s.size()) return false;
        val = 0;
        for (std::size_t k = 0; k < 4; ++k) {
            if (!is_hex(s[at + k])) return false;
            val = val * 16 + static_cast<char32_t>(hex_value(s[at + k]));
        }
        return true;
    };
    if (i + 2 > s.size() || s[i + 1] != 'u') return 0;
    char32_t cp = 0;
    if (!read4(i + 2, cp)) return 0;
    if (cp >= 0xD800 && cp <= 0xDBFF) {
        // high surrogate: needs a following \uDC00..\uDFFF
        char32_t lo = 0;
        if (i + 12 <= s.size() && s[i + 6] == '\\' && s[i + 7] == 'u' && read4(i + 8, lo) &&
            lo >= 0xDC00 && lo <= 0xDFFF) {
            char32_t combined = 0x10000 + ((cp - 0xD800) << 10) + (lo - 0xDC00);
            append_utf8(out, combined);
            return 12;
        }
        return 0;  // lone surrogate stays literal
    }
    if (cp >= 0xDC00 && cp <= 0xDFFF) return 0;
    append_utf8(out, cp);
    return 6;
}

inline std::string decode_escapes_once(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        std::size_t consumed = 0;
        if (s[i] == '&') {
            consumed = try_entity(s, i, out);
        } else if (s[i] == '\\') {
            consumed = try_unicode_escape(s, i, out);
        }
        if (consumed == 0) {
            out.push_back(s[i]);
            ++i;
        } else {
            i += consumed;
        }
    }
    return out;
}

}  // namespace detail

// Decodes HTML entities and \uXXXX escapes until a fixed point is reached.
// Every successful decode strictly shrinks the string, so this terminates;
// the fixed point is what makes the full pipeline idempotent on inputs such
// as "&amp;amp;".
inline std::string decode_escapes(std::string s) {
    for (;;) {
        std::string next = detail::decode_escapes_once(s);
        if (next == s) return s;
        s = std::move(next);
    }
}

// ---------------------------------------------------------------------------
// Stage 2: lowercase (ASCII plus the Latin-1 supplement block, which covers
// Spanish accented letters and enye)
// ---------------------------------------------------------------------------

inline std::string lowercase(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        char32_t cp = next_codepoint(s, i);
        if (cp >= U'A' && cp <= U'Z') {
            cp += 0x20;
        } else if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) {
            cp += 0x20;
        }
        append_utf8(out, cp);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Stage 3: URL replacement
// ---------------------------------------------------------------------------

namespace detail {

inline bool is_ascii_ws(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline bool is_ascii_alnum(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
}

}  // namespace detail

// Replaces every URL (http://, https://, or boundary-anchored www.) and all
// characters up to the next whitespace with the given token. Runs after
// lowercasing, so matching is lowercase-only.
inline std::string replace_urls(std::string_view s, std::string_view token = kUrlToken) {
    std::string out;
    out.reserve(s.size());
    std::size_t i = 0;
    const auto starts_with = [&](std::string_view prefix) {
        return s.compare(i, prefix.size(), prefix) == 0;
    };
    while (i < s.size()) {
        const bool boundary = i == 0 || !detail::is_ascii_alnum(s[i - 1]);
        bool hit = false;
        if (boundary) {
            hit = starts_with("http://") || starts_with("https://") || starts_with("www.");
        }
        if (hit) {
            out += token;
            while (i < s.size() && !detail::is_ascii_ws(s[i])) ++i;
        } else {
            out.push_back(s[i]);
            ++i;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Stages 4+5: collapse immediately repeated tokens, normalize whitespace
// ---------------------------------------------------------------------------

inline std::vector<std::string> word_tokens(std::string_view s) {
    std::vector<std::string> tokens;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && detail::is_ascii_ws(s[i])) ++i;
        std::size_t start = i;
        while (i < s.size() && !detail::is_ascii_ws(s[i])) ++i;
        if (i > start) tokens.emplace_back(s.substr(start, i - start));
    }
    return tokens;
}

inline std::string collapse_repeats(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    std::string_view prev;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && detail::is_ascii_ws(s[i])) ++i;
        std::size_t start = i;
        while (i < s.size() && !detail::is_ascii_ws(s[i])) ++i;
        if (i == start) break;
        std::string_view tok = s.substr(start, i - start);
        if (tok == prev) continue;
        if (!out.empty()) out.push_back(' ');
        out += tok;
        prev = tok;
    }
    return out;
}

// The full normalization pipeline. Total: never throws, "" maps to "".
inline std::string preprocess(std::string_view raw) {
    std::string s = decode_escapes(std::string(raw));
    s = lowercase(s);
    s = replace_urls(s);
    return collapse_repeats(s);
}

}  // namespace erd::text
