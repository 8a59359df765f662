#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <string>
#include <vector>

#include "erd/text.hpp"

using namespace erd;

TEST_CASE("preprocess applies the full pipeline in order") {
    CHECK(text::preprocess("Visita HTTPS://ex.com YA ya ya") == "visita weblink ya");
    CHECK(text::preprocess("&amp;") == "&");
    CHECK(text::preprocess("") == "");
}

TEST_CASE("preprocess lowercases ASCII and Latin-1 letters") {
    CHECK(text::preprocess("HOLA") == "hola");
    CHECK(text::preprocess("MAÑANA ÁRBOL") == "mañana árbol");
}

TEST_CASE("escape decoding handles entities and unicode escapes") {
    CHECK(text::decode_escapes("&lt;b&gt;") == "<b>");
    CHECK(text::decode_escapes("&#38;") == "&");
    CHECK(text::decode_escapes("&AMP;") == "&");
    CHECK(text::decode_escapes("\\u0041") == "A");
    CHECK(text::decode_escapes("\\u00f1") == "ñ");
    // surrogate pair
    CHECK(text::decode_escapes("\\ud83d\\ude00") == "\U0001F600");
    // lone surrogate and malformed escapes stay literal
    CHECK(text::decode_escapes("\\ud83d") == "\\ud83d");
    CHECK(text::decode_escapes("\\uzz00") == "\\uzz00");
    CHECK(text::decode_escapes("&notanentity;") == "&notanentity;");
}

TEST_CASE("escape decoding reaches a fixed point on double-encoded input") {
    CHECK(text::decode_escapes("&amp;amp;") == "&");
    CHECK(text::decode_escapes("&amp;#38;") == "&");
    CHECK(text::decode_escapes("\\u005cu0041") == "A");
}

TEST_CASE("url replacement consumes to the next whitespace") {
    CHECK(text::replace_urls("mira http://a.b/c?d=1 fin") == "mira weblink fin");
    CHECK(text::replace_urls("https://x.com") == "weblink");
    CHECK(text::replace_urls("www.x.com aqui") == "weblink aqui");
    // www needs a boundary; glued letters are not a URL
    CHECK(text::replace_urls("awww.com") == "awww.com");
}

TEST_CASE("repeated token collapse is consecutive-only") {
    CHECK(text::collapse_repeats("ya ya ya no ya") == "ya no ya");
    CHECK(text::collapse_repeats("  a\t a  b  ") == "a b");
    CHECK(text::collapse_repeats("") == "");
}

TEST_CASE("word_tokens splits on ASCII whitespace") {
    const auto tokens = text::word_tokens(" uno  dos\ttres\n");
    REQUIRE(tokens == std::vector<std::string>{"uno", "dos", "tres"});
    CHECK(text::word_tokens("").empty());
}

TEST_CASE("preprocess is idempotent on adversarial inputs") {
    // fragments chosen to stress every stage interaction
    const std::vector<std::string> fragments{
        "Hola",        "&amp;",   "&amp;amp;", "&#38;",  "\\u0041", "\\u005cu0041",
        "HTTP://x.es", "www.a.b", "ya",        "YA",     "  ",      "\t",
        "ñandú",       "&AMP;",   "weblink",   "a&lt;b", "\\ud83d", "&#x1F600;",
    };
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 500; ++trial) {
        std::string s;
        const int parts = 1 + static_cast<int>(rng() % 8);
        for (int i = 0; i < parts; ++i) {
            s += fragments[rng() % fragments.size()];
            if (rng() % 2) s.push_back(' ');
        }
        const std::string once = text::preprocess(s);
        const std::string twice = text::preprocess(once);
        INFO("input: " << s);
        CHECK(once == twice);
    }
}

TEST_CASE("preprocess is idempotent on random byte soup") {
    std::mt19937_64 rng(99);
    const std::string alphabet = "abcDEF &;#\\u01\t.:/wñ";
    for (int trial = 0; trial < 500; ++trial) {
        std::string s;
        const int len = static_cast<int>(rng() % 40);
        for (int i = 0; i < len; ++i) s.push_back(alphabet[rng() % alphabet.size()]);
        const std::string once = text::preprocess(s);
        INFO("input: " << s);
        CHECK(text::preprocess(once) == once);
    }
}
