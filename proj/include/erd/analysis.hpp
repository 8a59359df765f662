#pragma once

// Corpus diagnostics: class-level TF-IDF cosine similarity, top-K lexical
// overlap via the Jaccard index, and nighttime posting statistics.

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "erd/corpus.hpp"
#include "erd/errors.hpp"
#include "erd/text.hpp"

namespace erd::analysis {

struct ClassVocabulary {
    std::string label;
    std::map<std::string, std::uint64_t> term_counts;  // word-level, preprocessed
};

inline ClassVocabulary build_vocabulary(std::string label, const std::vector<std::string>& texts) {
    ClassVocabulary vocab;
    vocab.label = std::move(label);
    for (const auto& t : texts)
        for (const auto& w : text::word_tokens(t)) vocab.term_counts[w] += 1;
    return vocab;
}

// ---------------------------------------------------------------------------
// TF-IDF cosine over a two-document corpus (one document per class)
// ---------------------------------------------------------------------------

// Weight of term t in document d: count(t,d) * idf(t), with smoothed
// idf(t) = ln((1+N)/(1+df(t))) + 1 and N = 2 documents.
inline double class_tfidf_cosine(const std::string& pos_doc, const std::string& neg_doc) {
    const auto pos_counts = build_vocabulary("positive", {pos_doc}).term_counts;
    const auto neg_counts = build_vocabulary("negative", {neg_doc}).term_counts;
    if (pos_counts.empty() || neg_counts.empty()) {
        throw ValidationError("class_tfidf_cosine: a class document is empty");
    }
    double dot = 0.0, norm_pos = 0.0, norm_neg = 0.0;
    const auto idf = [](int df) { return std::log(3.0 / (1.0 + df)) + 1.0; };
    std::set<std::string> vocabulary;
    for (const auto& [w, c] : pos_counts) vocabulary.insert(w);
    for (const auto& [w, c] : neg_counts) vocabulary.insert(w);
    for (const auto& w : vocabulary) {
        const auto pit = pos_counts.find(w);
        const auto nit = neg_counts.find(w);
        const int df = (pit != pos_counts.end() ? 1 : 0) + (nit != neg_counts.end() ? 1 : 0);
        const double weight = idf(df);
        const double wp = pit != pos_counts.end() ? static_cast<double>(pit->second) * weight : 0.0;
        const double wn = nit != neg_counts.end() ? static_cast<double>(nit->second) * weight : 0.0;
        dot += wp * wn;
        norm_pos += wp * wp;
        norm_neg += wn * wn;
    }
    return dot / (std::sqrt(norm_pos) * std::sqrt(norm_neg));
}

// ---------------------------------------------------------------------------
// Top-K frequency sets and Jaccard overlap
// ---------------------------------------------------------------------------

// The k highest-frequency words; ties broken lexicographically ascending.
inline std::set<std::string> top_k_words(const ClassVocabulary& vocab, int k) {
    if (k < 1) throw ValidationError("top_k_words: k must be >= 1");
    std::vector<std::pair<std::string, std::uint64_t>> entries(vocab.term_counts.begin(),
                                                               vocab.term_counts.end());
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    std::set<std::string> out;
    const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k), entries.size());
    for (std::size_t i = 0; i < take; ++i) out.insert(entries[i].first);
    return out;
}

// |A ∩ B| / |A ∪ B|, defined as 1.0 when both sets are empty.
inline double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
    if (a.empty() && b.empty()) return 1.0;
    std::size_t shared = 0;
    for (const auto& x : a) shared += b.count(x);
    const std::size_t unions = a.size() + b.size() - shared;
    return static_cast<double>(shared) / static_cast<double>(unions);
}

struct OverlapReport {
    double cosine_tfidf = 0.0;
    double jaccard_topk = 0.0;
    int k = 0;
    int shared = 0;
    int union_size = 0;
    std::vector<std::string> shared_words;
    std::vector<std::string> pos_only;
    std::vector<std::string> neg_only;
};

// Builds the full lexical-overlap report from preprocessed class texts.
inline OverlapReport overlap_report(const std::vector<std::string>& pos_texts,
                                    const std::vector<std::string>& neg_texts, int k) {
    OverlapReport report;
    report.k = k;
    std::string pos_doc, neg_doc;
    for (const auto& t : pos_texts) {
        pos_doc += t;
        pos_doc += ' ';
    }
    for (const auto& t : neg_texts) {
        neg_doc += t;
        neg_doc += ' ';
    }
    report.cosine_tfidf = class_tfidf_cosine(pos_doc, neg_doc);
    const auto pos_top = top_k_words(build_vocabulary("positive", pos_texts), k);
    const auto neg_top = top_k_words(build_vocabulary("negative", neg_texts), k);
    for (const auto& w : pos_top) {
        if (neg_top.count(w)) {
            report.shared_words.push_back(w);
        } else {
            report.pos_only.push_back(w);
        }
    }
    for (const auto& w : neg_top) {
        if (!pos_top.count(w)) report.neg_only.push_back(w);
    }
    report.shared = static_cast<int>(report.shared_words.size());
    report.union_size = static_cast<int>(report.shared_words.size() + report.pos_only.size() +
                                         report.neg_only.size());
    report.jaccard_topk = jaccard(pos_top, neg_top);
    return report;
}

inline json overlap_to_json(const OverlapReport& r, bool include_word_lists = true) {
    json doc{{"cosine_tfidf", r.cosine_tfidf}, {"jaccard_topk", r.jaccard_topk},
             {"k", r.k},                       {"shared", r.shared},
             {"union_size", r.union_size}};
    if (include_word_lists) {
        doc["shared_words"] = r.shared_words;
        doc["pos_only"] = r.pos_only;
        doc["neg_only"] = r.neg_only;
    }
    return doc;
}

// ---------------------------------------------------------------------------
// Nighttime posting statistics
// ---------------------------------------------------------------------------

struct NightReport {
    // fraction of each user's posts that fall in the night window
    std::map<std::string, double> user_night_fraction;
    // fraction of users who are night users (strict majority of night posts)
    double night_user_fraction_overall = 0.0;
    std::optional<double> night_user_fraction_pos;
    std::optional<double> night_user_fraction_neg;
    int night_start = 18;
    int night_end = 6;
};

// A post is nocturnal iff its local-offset hour h satisfies h >= night_start
// or h < night_end for a wrapping window (start > end); for a non-wrapping
// window the test is night_start <= h < night_end. The default window is
// closed at 18:00 and open at 06:00.
inline bool is_nocturnal_hour(int hour, int night_start, int night_end) {
    if (night_start > night_end) return hour >= night_start || hour < night_end;
    return hour >= night_start && hour < night_end;
}

inline NightReport night_fraction(const std::vector<UserTimeline>& timelines,
                                  int night_start = 18, int night_end = 6) {
    NightReport report;
    report.night_start = night_start;
    report.night_end = night_end;
    int night_users = 0, labeled_pos = 0, labeled_neg = 0, night_pos = 0, night_neg = 0;
    int counted_users = 0;
    for (const auto& tl : timelines) {
        if (tl.posts.empty()) continue;
        int nocturnal = 0;
        for (const auto& p : tl.posts) {
            int hour;
            try {
                hour = local_hour(p.date);
            } catch (const ParseError&) {
                throw ParseError("unparseable date on post id_message " +
                                 std::to_string(p.id_message) + " of user '" + tl.nick + "'");
            }
            if (is_nocturnal_hour(hour, night_start, night_end)) ++nocturnal;
        }
        ++counted_users;
        report.user_night_fraction[tl.nick] =
            static_cast<double>(nocturnal) / static_cast<double>(tl.posts.size());
        const bool night_user = 2 * nocturnal > static_cast<int>(tl.posts.size());
        if (night_user) ++night_users;
        if (tl.label) {
            if (tl.label == Label::positive) {
                ++labeled_pos;
                if (night_user) ++night_pos;
            } else {
                ++labeled_neg;
                if (night_user) ++night_neg;
            }
        }
    }
    if (counted_users == 0) throw ValidationError("night_fraction: no users with posts");
    report.night_user_fraction_overall =
        static_cast<double>(night_users) / static_cast<double>(counted_users);
    if (labeled_pos > 0) {
        report.night_user_fraction_pos =
            static_cast<double>(night_pos) / static_cast<double>(labeled_pos);
    }
    if (labeled_neg > 0) {
        report.night_user_fraction_neg =
            static_cast<double>(night_neg) / static_cast<double>(labeled_neg);
    }
    return report;
}

inline json night_to_json(const NightReport& r) {
    json doc{{"night_start", r.night_start},
             {"night_end", r.night_end},
             {"night_user_fraction_overall", r.night_user_fraction_overall},
             {"night_user_fraction_pos",
              r.night_user_fraction_pos ? json(*r.night_user_fraction_pos) : json(nullptr)},
             {"night_user_fraction_neg",
              r.night_user_fraction_neg ? json(*r.night_user_fraction_neg) : json(nullptr)},
             {"user_night_fraction", r.user_night_fraction}};
    return doc;
}

}  // namespace erd::analysis
