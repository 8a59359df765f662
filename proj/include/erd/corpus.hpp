#pragma once

// Post-level corpus handling: parsing the on-disk JSON formats, regrouping
// posts into per-user round-ordered timelines, label attachment, stratified
// train/validation splitting, and corpus statistics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "erd/errors.hpp"
#include "erd/text.hpp"

namespace erd {

using json = nlohmann::json;

enum class Platform { Telegram, Twitch };

inline std::string_view to_string(Platform p) {
    return p == Platform::Telegram ? "Telegram" : "Twitch";
}

inline Platform platform_from_string(std::string_view s) {
    if (s == "Telegram") return Platform::Telegram;
    if (s == "Twitch") return Platform::Twitch;
    throw SchemaError("unknown platform '" + std::string(s) + "' (expected Telegram or Twitch)");
}

enum class Label : int { negative = 0, positive = 1 };

struct Post {
    std::int64_t id_message = 0;
    int round = 1;  // 1-based publication round
    std::string nick;
    std::string message;
    std::string date;  // kept verbatim, embedded UTC offset and all
    Platform platform = Platform::Telegram;
};

struct UserTimeline {
    std::string nick;
    std::vector<Post> posts;  // sorted by round ascending
    std::optional<Label> label;
};

enum class CorpusFormat { json_array, json_lines };

// ---------------------------------------------------------------------------
// Date handling
// ---------------------------------------------------------------------------

// Accepts "YYYY-MM-DD HH:MM:SS(.fff)?(+HH:MM|+HHMM|Z)" with ' ' or 'T'
// separating date and time. The offset is required but never applied: hours
// are read in the embedded local time.
inline const std::regex& date_pattern() {
    static const std::regex re(
        R"(^(\d{4})-(\d{2})-(\d{2})[ T](\d{2}):(\d{2}):(\d{2})(\.\d+)?(Z|[+-]\d{2}:?\d{2})$)");
    return re;
}

inline bool date_is_valid(const std::string& date) {
    std::smatch m;
    if (!std::regex_match(date, m, date_pattern())) return false;
    const int hour = std::stoi(m[4].str());
    const int minute = std::stoi(m[5].str());
    const int second = std::stoi(m[6].str());
    return hour <= 23 && minute <= 59 && second <= 60;
}

// Hour-of-day in the timestamp's own offset.
inline int local_hour(const std::string& date) {
    std::smatch m;
    if (!std::regex_match(date, m, date_pattern())) {
        throw ParseError("unparseable date '" + date + "'");
    }
    return std::stoi(m[4].str());
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

namespace detail {

inline const json& require_field(const json& record, const char* name, std::size_t index) {
    auto it = record.find(name);
    if (it == record.end() || it->is_null()) {
        throw SchemaError("record " + std::to_string(index) + ": missing required field '" +
                          name + "'");
    }
    return *it;
}

inline Post post_from_record(const json& record, std::size_t index) {
    if (!record.is_object()) {
        throw SchemaError("record " + std::to_string(index) + ": expected a JSON object");
    }
    Post post;
    const json& id = require_field(record, "id_message", index);
    if (!id.is_number_integer()) {
        throw SchemaError("record " + std::to_string(index) + ": 'id_message' must be an integer");
    }
    post.id_message = id.get<std::int64_t>();

    const json& round = require_field(record, "round", index);
    if (!round.is_number_integer() || round.get<std::int64_t>() < 1) {
        throw SchemaError("record " + std::to_string(index) +
                          ": 'round' must be a positive integer");
    }
    post.round = round.get<int>();

    const json& nick = require_field(record, "nick", index);
    if (!nick.is_string() || nick.get_ref<const std::string&>().empty()) {
        throw SchemaError("record " + std::to_string(index) + ": 'nick' must be a non-empty string");
    }
    post.nick = nick.get<std::string>();

    const json& message = require_field(record, "message", index);
    if (!message.is_string()) {
        throw SchemaError("record " + std::to_string(index) + ": 'message' must be a string");
    }
    post.message = message.get<std::string>();

    const json& date = require_field(record, "date", index);
    if (!date.is_string() || !date_is_valid(date.get_ref<const std::string&>())) {
        throw SchemaError("record " + std::to_string(index) +
                          ": 'date' must be a timestamp with an explicit UTC offset");
    }
    post.date = date.get<std::string>();

    const json& platform = require_field(record, "platform", index);
    if (!platform.is_string()) {
        throw SchemaError("record " + std::to_string(index) + ": 'platform' must be a string");
    }
    try {
        post.platform = platform_from_string(platform.get_ref<const std::string&>());
    } catch (const SchemaError& e) {
        throw SchemaError("record " + std::to_string(index) + ": " + e.what());
    }
    return post;
}

inline std::vector<UserTimeline> group_posts(std::vector<Post> posts) {
    std::set<std::pair<std::string, std::int64_t>> seen;
    for (const Post& p : posts) {
        if (!seen.emplace(p.nick, p.id_message).second) {
            throw DuplicateError("duplicate post (nick '" + p.nick + "', id_message " +
                                 std::to_string(p.id_message) + ")");
        }
    }
    std::map<std::string, UserTimeline> by_nick;
    for (Post& p : posts) {
        UserTimeline& tl = by_nick[p.nick];
        tl.nick = p.nick;
        tl.posts.push_back(std::move(p));
    }
    std::vector<UserTimeline> timelines;
    timelines.reserve(by_nick.size());
    for (auto& [nick, tl] : by_nick) {
        std::stable_sort(tl.posts.begin(), tl.posts.end(),
                         [](const Post& a, const Post& b) { return a.round < b.round; });
        timelines.push_back(std::move(tl));
    }
    return timelines;
}

}  // namespace detail

inline std::vector<UserTimeline> parse_corpus_text(std::string_view content, CorpusFormat format) {
    std::vector<Post> posts;
    if (format == CorpusFormat::json_array) {
        json doc;
        try {
            doc = json::parse(content);
        } catch (const json::parse_error& e) {
            throw ParseError("malformed JSON at byte " + std::to_string(e.byte) + ": " + e.what());
        }
        if (!doc.is_array()) {
            throw SchemaError("top-level JSON value must be an array of post records");
        }
        posts.reserve(doc.size());
        for (std::size_t i = 0; i < doc.size(); ++i) {
            posts.push_back(detail::post_from_record(doc[i], i));
        }
    } else {
        std::size_t line_no = 0;
        std::size_t start = 0;
        while (start <= content.size()) {
            std::size_t end = content.find('\n', start);
            if (end == std::string_view::npos) end = content.size();
            std::string_view line = content.substr(start, end - start);
            ++line_no;
            start = end + 1;
            if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
            json record;
            try {
                record = json::parse(line);
            } catch (const json::parse_error& e) {
                throw ParseError("malformed JSON on line " + std::to_string(line_no) + ", byte " +
                                 std::to_string(e.byte) + ": " + e.what());
            }
            posts.push_back(detail::post_from_record(record, line_no - 1));
            if (end == content.size()) break;
        }
    }
    return detail::group_posts(std::move(posts));
}

inline CorpusFormat detect_format(std::string_view content) {
    const std::size_t i = content.find_first_not_of(" \t\r\n");
    if (i != std::string_view::npos && content[i] == '[') return CorpusFormat::json_array;
    return CorpusFormat::json_lines;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::vector<UserTimeline> parse_corpus(const std::string& path, CorpusFormat format) {
    return parse_corpus_text(read_file(path), format);
}

inline std::vector<UserTimeline> parse_corpus(const std::string& path) {
    const std::string content = read_file(path);
    return parse_corpus_text(content, detect_format(content));
}

// ---------------------------------------------------------------------------
// Serialization (inverse of parse: flattens timelines back to post records)
// ---------------------------------------------------------------------------

inline json post_to_json(const Post& p) {
    return json{{"id_message", p.id_message}, {"round", p.round},       {"nick", p.nick},
                {"message", p.message},       {"date", p.date},         {"platform", to_string(p.platform)}};
}

inline std::string serialize_corpus(const std::vector<UserTimeline>& timelines,
                                    CorpusFormat format) {
    if (format == CorpusFormat::json_array) {
        json arr = json::array();
        for (const auto& tl : timelines)
            for (const auto& p : tl.posts) arr.push_back(post_to_json(p));
        return arr.dump(2);
    }
    std::string out;
    for (const auto& tl : timelines)
        for (const auto& p : tl.posts) {
            out += post_to_json(p).dump();
            out.push_back('\n');
        }
    return out;
}

// ---------------------------------------------------------------------------
// Labels: plain text sidecar, one "nick<TAB>label" per line, label in {0,1}
// ---------------------------------------------------------------------------

inline std::map<std::string, Label> parse_labels_text(std::string_view content) {
    std::map<std::string, Label> labels;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= content.size()) {
        std::size_t end = content.find('\n', start);
        if (end == std::string_view::npos) end = content.size();
        std::string_view line = content.substr(start, end - start);
        ++line_no;
        const bool last = end == content.size();
        start = end + 1;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.find_first_not_of(" \t") == std::string_view::npos) {
            if (last) break;
            continue;
        }
        const std::size_t tab = line.find('\t');
        if (tab == std::string_view::npos) {
            throw ParseError("labels line " + std::to_string(line_no) +
                             ": expected 'nick<TAB>label'");
        }
        std::string nick(line.substr(0, tab));
        std::string_view value = line.substr(tab + 1);
        Label label;
        if (value == "0") {
            label = Label::negative;
        } else if (value == "1") {
            label = Label::positive;
        } else {
            throw ParseError("labels line " + std::to_string(line_no) + ": label must be 0 or 1");
        }
        if (!labels.emplace(std::move(nick), label).second) {
            throw DuplicateError("labels line " + std::to_string(line_no) + ": duplicate nick");
        }
        if (last) break;
    }
    return labels;
}

inline std::map<std::string, Label> load_labels(const std::string& path) {
    return parse_labels_text(read_file(path));
}

inline void attach_labels(std::vector<UserTimeline>& timelines,
                          const std::map<std::string, Label>& labels) {
    for (auto& tl : timelines) {
        auto it = labels.find(tl.nick);
        if (it != labels.end()) tl.label = it->second;
    }
}

inline std::string serialize_labels(const std::vector<UserTimeline>& timelines) {
    std::string out;
    for (const auto& tl : timelines) {
        if (!tl.label) continue;
        out += tl.nick;
        out.push_back('\t');
        out += tl.label == Label::positive ? '1' : '0';
        out.push_back('\n');
    }
    return out;
}

// Applies the text normalization pipeline to every message, returning a new
// corpus. Raw messages are what stats count; everything downstream of
// training and scoring expects preprocessed text.
inline std::vector<UserTimeline> preprocess_corpus(std::vector<UserTimeline> timelines) {
    for (auto& tl : timelines)
        for (auto& p : tl.posts) p.message = text::preprocess(p.message);
    return timelines;
}

// ---------------------------------------------------------------------------
// Stratified train/validation split
// ---------------------------------------------------------------------------

// Per-class stratified split with largest-remainder seat allocation, so the
// total validation size is round(n * fraction) and each class deviates from
// exact proportionality by at most one user. Deterministic for a fixed seed
// (hand-rolled Fisher-Yates; std::shuffle is not portable across stdlibs).
inline std::pair<std::vector<UserTimeline>, std::vector<UserTimeline>> split_train_val(
    const std::vector<UserTimeline>& timelines, double val_fraction, std::uint64_t seed) {
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
        throw ValidationError("val_fraction must be in (0,1)");
    }
    std::vector<std::size_t> pos_idx, neg_idx;
    for (std::size_t i = 0; i < timelines.size(); ++i) {
        if (!timelines[i].label) {
            throw ValidationError("cannot split: user '" + timelines[i].nick + "' is unlabeled");
        }
        (timelines[i].label == Label::positive ? pos_idx : neg_idx).push_back(i);
    }
    if (pos_idx.empty() || neg_idx.empty()) {
        throw ValidationError("cannot split: both classes must be present");
    }

    std::mt19937_64 rng(seed);
    const auto shuffle = [&rng](std::vector<std::size_t>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[rng() % i]);
        }
    };
    shuffle(pos_idx);
    shuffle(neg_idx);

    const double n = static_cast<double>(timelines.size());
    const auto total_val =
        static_cast<std::size_t>(std::llround(n * val_fraction));
    const double pos_quota = static_cast<double>(pos_idx.size()) * val_fraction;
    const double neg_quota = static_cast<double>(neg_idx.size()) * val_fraction;
    std::size_t pos_val = static_cast<std::size_t>(pos_quota);
    std::size_t neg_val = static_cast<std::size_t>(neg_quota);
    // hand out remaining seats by largest fractional remainder, positive first on ties
    while (pos_val + neg_val < total_val) {
        const double pos_rem = pos_quota - static_cast<double>(pos_val);
        const double neg_rem = neg_quota - static_cast<double>(neg_val);
        if ((pos_rem >= neg_rem && pos_val < pos_idx.size()) || neg_val >= neg_idx.size()) {
            ++pos_val;
        } else {
            ++neg_val;
        }
    }

    std::set<std::size_t> val_set;
    for (std::size_t k = 0; k < pos_val; ++k) val_set.insert(pos_idx[k]);
    for (std::size_t k = 0; k < neg_val; ++k) val_set.insert(neg_idx[k]);

    std::vector<UserTimeline> train, val;
    for (std::size_t i = 0; i < timelines.size(); ++i) {
        (val_set.count(i) ? val : train).push_back(timelines[i]);
    }
    return {std::move(train), std::move(val)};
}

// ---------------------------------------------------------------------------
// Stats
// ---------------------------------------------------------------------------

struct CorpusStats {
    int n_users = 0;
    int n_pos = 0;
    int n_neg = 0;
    double posts_per_user_mean = 0.0;
    int posts_per_user_min = 0;
    int posts_per_user_max = 0;
    double words_per_post_mean = 0.0;
    int words_per_post_min = 0;
    int words_per_post_max = 0;
    // users per platform per class (labeled users only)
    int telegram_pos = 0, telegram_neg = 0, twitch_pos = 0, twitch_neg = 0;
};

// Word counts use the raw message (whitespace-delimited tokens), matching
// author-side counting before any cleaning.
inline CorpusStats compute_stats(const std::vector<UserTimeline>& timelines) {
    if (timelines.empty()) throw ValidationError("compute_stats: empty corpus");
    CorpusStats st;
    st.n_users = static_cast<int>(timelines.size());
    st.posts_per_user_min = std::numeric_limits<int>::max();
    st.words_per_post_min = std::numeric_limits<int>::max();
    long long total_posts = 0;
    long long total_words = 0;
    for (const auto& tl : timelines) {
        const int n_posts = static_cast<int>(tl.posts.size());
        total_posts += n_posts;
        st.posts_per_user_min = std::min(st.posts_per_user_min, n_posts);
        st.posts_per_user_max = std::max(st.posts_per_user_max, n_posts);
        for (const auto& p : tl.posts) {
            const int words = static_cast<int>(text::word_tokens(p.message).size());
            total_words += words;
            st.words_per_post_min = std::min(st.words_per_post_min, words);
            st.words_per_post_max = std::max(st.words_per_post_max, words);
        }
        if (tl.label) {
            const bool positive = tl.label == Label::positive;
            (positive ? st.n_pos : st.n_neg) += 1;
            if (!tl.posts.empty()) {
                const bool telegram = tl.posts.front().platform == Platform::Telegram;
                if (telegram) {
                    (positive ? st.telegram_pos : st.telegram_neg) += 1;
                } else {
                    (positive ? st.twitch_pos : st.twitch_neg) += 1;
                }
            }
        }
    }
    st.posts_per_user_mean = static_cast<double>(total_posts) / st.n_users;
    st.words_per_post_mean =
        total_posts == 0 ? 0.0 : static_cast<double>(total_words) / static_cast<double>(total_posts);
    if (total_posts == 0) {
        st.posts_per_user_min = 0;
        st.words_per_post_min = 0;
    }
    return st;
}

inline json stats_to_json(const CorpusStats& st) {
    return json{
        {"n_users", st.n_users},
        {"n_pos", st.n_pos},
        {"n_neg", st.n_neg},
        {"posts_per_user", {{"mean", st.posts_per_user_mean},
                            {"min", st.posts_per_user_min},
                            {"max", st.posts_per_user_max}}},
        {"words_per_post", {{"mean", st.words_per_post_mean},
                            {"min", st.words_per_post_min},
                            {"max", st.words_per_post_max}}},
        {"platform_by_class", {{"telegram_pos", st.telegram_pos},
                               {"telegram_neg", st.telegram_neg},
                               {"twitch_pos", st.twitch_pos},
                               {"twitch_neg", st.twitch_neg}}},
    };
}

}  // namespace erd
