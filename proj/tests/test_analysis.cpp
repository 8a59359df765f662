#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "erd/analysis.hpp"
#include "support/synthetic.hpp"

using namespace erd;
using Catch::Approx;

TEST_CASE("class_tfidf_cosine boundary anchors") {
    CHECK(analysis::class_tfidf_cosine("a a b", "a a b") == Approx(1.0).margin(1e-9));
    CHECK(analysis::class_tfidf_cosine("a b c", "x y z") == Approx(0.0).margin(1e-12));
    CHECK_THROWS_AS(analysis::class_tfidf_cosine("", "a"), ValidationError);
    CHECK_THROWS_AS(analysis::class_tfidf_cosine("a", "  "), ValidationError);
}

TEST_CASE("class_tfidf_cosine matches a brute-force 2x3 oracle") {
    // independent computation over the vocabulary {a, b, c} of
    // pos = "a a b", neg = "a c" with idf(t) = ln(3/(1+df)) + 1
    const double idf_a = std::log(3.0 / 3.0) + 1.0;  // df = 2
    const double idf_b = std::log(3.0 / 2.0) + 1.0;  // df = 1
    const double idf_c = std::log(3.0 / 2.0) + 1.0;  // df = 1
    const double pos_vec[3] = {2.0 * idf_a, 1.0 * idf_b, 0.0};
    const double neg_vec[3] = {1.0 * idf_a, 0.0, 1.0 * idf_c};
    double dot = 0.0, np = 0.0, nn = 0.0;
    for (int i = 0; i < 3; ++i) {
        dot += pos_vec[i] * neg_vec[i];
        np += pos_vec[i] * pos_vec[i];
        nn += neg_vec[i] * neg_vec[i];
    }
    const double expected = dot / (std::sqrt(np) * std::sqrt(nn));
    CHECK(analysis::class_tfidf_cosine("a a b", "a c") == Approx(expected).epsilon(1e-12));
}

TEST_CASE("class_tfidf_cosine is symmetric and order-invariant") {
    const std::string d1 = "uno dos dos tres", d2 = "dos tres tres cuatro";
    CHECK(analysis::class_tfidf_cosine(d1, d2) == Approx(analysis::class_tfidf_cosine(d2, d1)));
    CHECK(analysis::class_tfidf_cosine("tres dos dos uno", d2) ==
          Approx(analysis::class_tfidf_cosine(d1, d2)));
}

TEST_CASE("top_k_words with documented tie-break") {
    analysis::ClassVocabulary vocab;
    vocab.term_counts = {{"a", 3}, {"b", 2}, {"c", 1}};
    CHECK(analysis::top_k_words(vocab, 2) == std::set<std::string>{"a", "b"});

    analysis::ClassVocabulary tied;
    tied.term_counts = {{"a", 2}, {"b", 2}, {"c", 1}};
    CHECK(analysis::top_k_words(tied, 1) == std::set<std::string>{"a"});

    CHECK(analysis::top_k_words(vocab, 10) == std::set<std::string>{"a", "b", "c"});
    CHECK_THROWS_AS(analysis::top_k_words(vocab, 0), ValidationError);
}

TEST_CASE("jaccard reproduces the 735/1265 overlap value") {
    std::set<std::string> a, b;
    // 735 shared words, union of 1265
    for (int i = 0; i < 735; ++i) {
        a.insert("shared" + std::to_string(i));
        b.insert("shared" + std::to_string(i));
    }
    for (int i = 0; i < 265; ++i) a.insert("posonly" + std::to_string(i));
    for (int i = 0; i < 265; ++i) b.insert("negonly" + std::to_string(i));
    REQUIRE(a.size() == 1000);
    REQUIRE(b.size() == 1000);
    CHECK(analysis::jaccard(a, b) == Approx(0.581).margin(0.0005));
}

TEST_CASE("jaccard basic properties") {
    const std::set<std::string> a{"x", "y"}, b{"z"};
    CHECK(analysis::jaccard(a, a) == 1.0);
    CHECK(analysis::jaccard(a, b) == 0.0);
    CHECK(analysis::jaccard({}, {}) == 1.0);
    CHECK(analysis::jaccard(a, b) == analysis::jaccard(b, a));

    // monotone under adding shared elements
    std::set<std::string> c{"x"}, d{"y"};
    const double before = analysis::jaccard(c, d);
    c.insert("w");
    d.insert("w");
    CHECK(analysis::jaccard(c, d) > before);
}

TEST_CASE("overlap_report invariants") {
    const std::vector<std::string> pos{"casino apuesta velas trading", "apuesta bote"};
    const std::vector<std::string> neg{"paciencia consejo aprender", "consejo apuesta"};
    const auto report = analysis::overlap_report(pos, neg, 3);
    CHECK(report.k == 3);
    CHECK(report.union_size ==
          static_cast<int>(report.shared_words.size() + report.pos_only.size() +
                           report.neg_only.size()));
    CHECK(report.jaccard_topk ==
          Approx(static_cast<double>(report.shared) / report.union_size));
    CHECK(report.cosine_tfidf >= 0.0);
    CHECK(report.cosine_tfidf <= 1.0);
}

namespace {

UserTimeline user_with_hours(const std::string& nick, const std::vector<int>& hours,
                             std::optional<Label> label = {}) {
    UserTimeline tl;
    tl.nick = nick;
    tl.label = label;
    int id = 1;
    for (int h : hours) {
        Post p;
        p.id_message = id++;
        p.round = id;
        p.nick = nick;
        p.message = "hola";
        char buf[40];
        std::snprintf(buf, sizeof(buf), "2021-01-06 %02d:02:48+01:00", h);
        p.date = buf;
        tl.posts.push_back(std::move(p));
    }
    return tl;
}

}  // namespace

TEST_CASE("night_fraction window conventions") {
    // 04:02 nocturnal; 18:00 nocturnal (closed); 06:00 diurnal (open)
    CHECK(analysis::is_nocturnal_hour(4, 18, 6));
    CHECK(analysis::is_nocturnal_hour(18, 18, 6));
    CHECK_FALSE(analysis::is_nocturnal_hour(6, 18, 6));
    CHECK_FALSE(analysis::is_nocturnal_hour(12, 18, 6));
    // non-wrapping window
    CHECK(analysis::is_nocturnal_hour(3, 0, 6));
    CHECK_FALSE(analysis::is_nocturnal_hour(7, 0, 6));
}

TEST_CASE("night_fraction aggregates per user and class") {
    std::vector<UserTimeline> corpus;
    corpus.push_back(user_with_hours("night", {23, 2, 4}, Label::positive));
    corpus.push_back(user_with_hours("day", {9, 12, 15}, Label::negative));
    corpus.push_back(user_with_hours("tied", {2, 3, 10, 12, 18, 6}, Label::negative));

    const auto report = analysis::night_fraction(corpus);
    CHECK(report.user_night_fraction.at("night") == Approx(1.0));
    CHECK(report.user_night_fraction.at("day") == Approx(0.0));
    // tied user: 3 of 6 nocturnal (2, 3, 18) -> not a strict majority
    CHECK(report.user_night_fraction.at("tied") == Approx(0.5));
    CHECK(report.night_user_fraction_overall == Approx(1.0 / 3.0));
    REQUIRE(report.night_user_fraction_pos.has_value());
    CHECK(*report.night_user_fraction_pos == Approx(1.0));
    REQUIRE(report.night_user_fraction_neg.has_value());
    CHECK(*report.night_user_fraction_neg == Approx(0.0));
}

TEST_CASE("night_fraction is order-invariant and validates dates") {
    auto tl = user_with_hours("u", {1, 22, 13});
    auto reversed = tl;
    std::reverse(reversed.posts.begin(), reversed.posts.end());
    const auto a = analysis::night_fraction({tl});
    const auto b = analysis::night_fraction({reversed});
    CHECK(a.user_night_fraction.at("u") == b.user_night_fraction.at("u"));

    auto bad = tl;
    bad.posts[1].date = "yesterday";
    CHECK_THROWS_WITH(analysis::night_fraction({bad}),
                      Catch::Matchers::ContainsSubstring("id_message 2"));
}
