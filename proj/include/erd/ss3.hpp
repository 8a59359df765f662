#pragma once

// Incremental SS3-style classifier over character trigrams. Training builds
// per-class term frequency tables; scoring assigns each term a global value
//
//   gv(w,c) = lv(w,c) * sg(w,c) * sn(w,c)
//
// with local value lv = (tf/max_tf)^sigma, significance sg = lv/(lv+lambda*m)
// and sanction sn = max(0, 1 - m/lv)^rho, where m is the other class's local
// value. This is a flat word-level SS3 variant: confidence values are plain
// sums of gv over every term occurrence in a user's history, with no
// sentence/paragraph summary operators.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "erd/corpus.hpp"
#include "erd/errors.hpp"
#include "erd/text.hpp"

namespace erd::ss3 {

struct Hyperparams {
    double sigma = 0.44;   // smoothness
    double rho = 0.5;      // sanction
    double lambda = 0.86;  // significance
};

struct TermCounts {
    std::uint64_t pos = 0;
    std::uint64_t neg = 0;
};

struct Model {
    Hyperparams hp;
    std::unordered_map<std::string, TermCounts> tf;
    std::uint64_t max_tf_pos = 0;
    std::uint64_t max_tf_neg = 0;
};

// One scored term occurrence, for interpretability traces.
struct TermContribution {
    std::string term;
    double gv_positive = 0.0;
    double gv_negative = 0.0;
};

// Per-user cumulative evidence. delay counts posts observed so far.
struct ConfidenceState {
    double cv_pos = 0.0;
    double cv_neg = 0.0;
    int delay = 0;
};

// ---------------------------------------------------------------------------
// Tokenization: all contiguous 3-codepoint windows inside each whitespace
// token; tokens shorter than three codepoints are kept whole. Windows never
// cross whitespace.
// ---------------------------------------------------------------------------

inline std::vector<std::string> tokenize_trigrams(std::string_view preprocessed) {
    std::vector<std::string> terms;
    for (const std::string& token : text::word_tokens(preprocessed)) {
        // codepoint start offsets
        std::vector<std::size_t> starts;
        std::size_t i = 0;
        while (i < token.size()) {
            starts.push_back(i);
            text::next_codepoint(token, i);
        }
        starts.push_back(token.size());
        const std::size_t n = starts.size() - 1;  // codepoints in token
        if (n == 0) continue;
        if (n < 3) {
            terms.push_back(token);
            continue;
        }
        for (std::size_t k = 0; k + 3 <= n; ++k) {
            terms.push_back(token.substr(starts[k], starts[k + 3] - starts[k]));
        }
    }
    return terms;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

// Counts trigram occurrences per class over all posts of labeled users.
// Texts must already be preprocessed (see corpus::preprocess_corpus).
inline Model train(const std::vector<UserTimeline>& timelines, const Hyperparams& hp = {}) {
    Model model;
    model.hp = hp;
    bool saw_pos = false, saw_neg = false;
    for (const auto& tl : timelines) {
        if (!tl.label) {
            throw ValidationError("train: user '" + tl.nick + "' is unlabeled");
        }
        const bool positive = tl.label == Label::positive;
        (positive ? saw_pos : saw_neg) = true;
        for (const auto& post : tl.posts) {
            for (std::string& term : tokenize_trigrams(post.message)) {
                TermCounts& c = model.tf[std::move(term)];
                (positive ? c.pos : c.neg) += 1;
            }
        }
    }
    if (!saw_pos || !saw_neg) {
        throw ValidationError("train: both classes must be represented");
    }
    for (const auto& [term, c] : model.tf) {
        model.max_tf_pos = std::max(model.max_tf_pos, c.pos);
        model.max_tf_neg = std::max(model.max_tf_neg, c.neg);
    }
    if (model.max_tf_pos == 0 || model.max_tf_neg == 0) {
        throw ValidationError("train: a class has an empty vocabulary");
    }
    return model;
}

// ---------------------------------------------------------------------------
// Scoring
// ---------------------------------------------------------------------------

namespace detail {

inline double local_value(std::uint64_t tf, std::uint64_t max_tf, double sigma) {
    if (tf == 0 || max_tf == 0) return 0.0;
    return std::pow(static_cast<double>(tf) / static_cast<double>(max_tf), sigma);
}

struct GvPair {
    double pos = 0.0;
    double neg = 0.0;
};

inline double combine(double lv, double m, double lambda, double rho) {
    const double denom = lv + lambda * m;
    const double sg = denom > 0.0 ? lv / denom : 0.0;
    const double sn = lv > 0.0 ? std::pow(std::max(0.0, 1.0 - m / lv), rho) : 0.0;
    return lv * sg * sn;
}

inline GvPair gv_both(const Model& model, const std::string& term) {
    auto it = model.tf.find(term);
    if (it == model.tf.end()) return {};  // unseen terms contribute nothing
    const double lv_pos = local_value(it->second.pos, model.max_tf_pos, model.hp.sigma);
    const double lv_neg = local_value(it->second.neg, model.max_tf_neg, model.hp.sigma);
    return {combine(lv_pos, lv_neg, model.hp.lambda, model.hp.rho),
            combine(lv_neg, lv_pos, model.hp.lambda, model.hp.rho)};
}

}  // namespace detail

// Per-term, per-class relevance in [0,1]. Unseen terms score 0.
inline double global_value(const Model& model, const std::string& term, Label c) {
    const detail::GvPair gv = detail::gv_both(model, term);
    return c == Label::positive ? gv.pos : gv.neg;
}

inline TermContribution term_contribution(const Model& model, const std::string& term) {
    const detail::GvPair gv = detail::gv_both(model, term);
    return {term, gv.pos, gv.neg};
}

// Adds every term occurrence's gv into the running confidence values, one
// term at a time so that chunked and concatenated accumulation produce
// bit-identical sums. delay advances by exactly one per call.
inline void accumulate(ConfidenceState& state, const Model& model, std::string_view preprocessed) {
    for (const std::string& term : tokenize_trigrams(preprocessed)) {
        const detail::GvPair gv = detail::gv_both(model, term);
        state.cv_pos += gv.pos;
        state.cv_neg += gv.neg;
    }
    state.delay += 1;
}

struct Explanation {
    std::vector<TermContribution> contributions;  // one per term occurrence, in order
    std::vector<double> cv_pos_trajectory;        // prefix sums of gv_positive
};

// Scores a text term-by-term without mutating any state. The contribution
// total equals exactly what accumulate() would add.
inline Explanation explain(const Model& model, std::string_view preprocessed) {
    Explanation ex;
    double running = 0.0;
    for (const std::string& term : tokenize_trigrams(preprocessed)) {
        const detail::GvPair gv = detail::gv_both(model, term);
        ex.contributions.push_back({term, gv.pos, gv.neg});
        running += gv.pos;
        ex.cv_pos_trajectory.push_back(running);
    }
    return ex;
}

// ---------------------------------------------------------------------------
// Persistence: a single JSON document {classes, hyperparams, tf tables}
// ---------------------------------------------------------------------------

inline json model_to_json(const Model& model) {
    std::map<std::string, std::uint64_t> pos, neg;  // ordered for stable output
    for (const auto& [term, c] : model.tf) {
        if (c.pos > 0) pos[term] = c.pos;
        if (c.neg > 0) neg[term] = c.neg;
    }
    return json{
        {"classes", {"positive", "negative"}},
        {"hyperparams",
         {{"sigma", model.hp.sigma}, {"rho", model.hp.rho}, {"lambda", model.hp.lambda}}},
        {"tf", {{"positive", pos}, {"negative", neg}}},
    };
}

inline Model model_from_json(const json& doc) {
    Model model;
    try {
        model.hp.sigma = doc.at("hyperparams").at("sigma").get<double>();
        model.hp.rho = doc.at("hyperparams").at("rho").get<double>();
        model.hp.lambda = doc.at("hyperparams").at("lambda").get<double>();
        for (const auto& [term, count] : doc.at("tf").at("positive").items()) {
            model.tf[term].pos = count.get<std::uint64_t>();
        }
        for (const auto& [term, count] : doc.at("tf").at("negative").items()) {
            model.tf[term].neg = count.get<std::uint64_t>();
        }
    } catch (const json::exception& e) {
        throw SchemaError(std::string("invalid model document: ") + e.what());
    }
    for (const auto& [term, c] : model.tf) {
        model.max_tf_pos = std::max(model.max_tf_pos, c.pos);
        model.max_tf_neg = std::max(model.max_tf_neg, c.neg);
    }
    return model;
}

inline void save_model(const Model& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write model file '" + path + "'");
    out << model_to_json(model).dump(2) << '\n';
}

inline Model load_model(const std::string& path) {
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ParseError("model file '" + path + "': " + e.what());
    }
    return model_from_json(doc);
}

// ---------------------------------------------------------------------------
// Hyperparameter grid search
// ---------------------------------------------------------------------------

// Full-history prediction: positive iff cv_pos > cv_neg after the whole
// timeline. This is the classification-effectiveness view used to rank
// hyperparameter combinations; streaming decisions are a separate concern.
inline Label predict_full_history(const Model& model, const UserTimeline& tl) {
    ConfidenceState state;
    for (const auto& post : tl.posts) accumulate(state, model, post.message);
    return state.cv_pos > state.cv_neg ? Label::positive : Label::negative;
}

struct GridSearchResult {
    Hyperparams best;
    double best_macro_f1 = -1.0;
};

// Trains one model per (sigma, rho, lambda) combination and keeps the one
// with the best macro F1 on the validation users. Ties keep the earlier
// combination, so the result is deterministic in grid order.
inline GridSearchResult grid_search(const std::vector<UserTimeline>& train_set,
                                    const std::vector<UserTimeline>& val_set,
                                    const std::vector<double>& sigmas,
                                    const std::vector<double>& rhos,
                                    const std::vector<double>& lambdas) {
    if (sigmas.empty() || rhos.empty() || lambdas.empty()) {
        throw ValidationError("grid_search: empty grid");
    }
    GridSearchResult result;
    for (double sigma : sigmas)
        for (double rho : rhos)
            for (double lambda : lambdas) {
                const Model model = train(train_set, {sigma, rho, lambda});
                long tp = 0, fp = 0, fn = 0, tn = 0;
                for (const auto& tl : val_set) {
                    if (!tl.label) {
                        throw ValidationError("grid_search: unlabeled validation user '" +
                                              tl.nick + "'");
                    }
                    const bool truth = tl.label == Label::positive;
                    const bool pred = predict_full_history(model, tl) == Label::positive;
                    if (pred && truth) ++tp;
                    else if (pred && !truth) ++fp;
                    else if (!pred && truth) ++fn;
                    else ++tn;
                }
                const auto f1 = [](double p, double r) {
                    return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
                };
                const double p_pos = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
                const double r_pos = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
                const double p_neg = tn + fn > 0 ? static_cast<double>(tn) / (tn + fn) : 0.0;
                const double r_neg = tn + fp > 0 ? static_cast<double>(tn) / (tn + fp) : 0.0;
                const double macro_f1 = 0.5 * (f1(p_pos, r_pos) + f1(p_neg, r_neg));
                if (macro_f1 > result.best_macro_f1) {
                    result.best_macro_f1 = macro_f1;
                    result.best = {sigma, rho, lambda};
                }
            }
    return result;
}

}  // namespace erd::ss3
