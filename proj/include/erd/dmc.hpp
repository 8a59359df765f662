#pragma once

// Decision policies over per-user evidence streams. Two policies are
// provided: a cohort-global rule that flags users whose score exceeds
// median + gamma * MAD of all current scores, and a history-based rule that
// flags a user once at least T per-round scores have reached threshold tau.
// Decisions are sticky: the first positive is final.
//
// This module is deliberately independent of any classifier; scores arrive
// as plain numbers.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "erd/errors.hpp"

namespace erd::dmc {

struct GlobalPolicyConfig {
    double gamma = 0.5;  // deviation multiplier on the MAD
};

struct HistoryPolicyConfig {
    double tau = 0.6;          // qualification threshold, closed: p >= tau
    int required_count = 10;   // positive predictions needed (T)
};

struct UserDecisionState {
    std::string nick;
    std::vector<double> score_history;  // per-round scores, in order
    int qualifying_count = 0;           // #{i : p_i >= tau}
    bool decided = false;
    int decision_round = 0;  // meaningful only when decided
};

struct DecisionOutcome {
    int decision = 0;  // 0 or 1
    int latency = 0;   // decision round for positives, last round otherwise
};

// ---------------------------------------------------------------------------
// Robust statistics
// ---------------------------------------------------------------------------

// Median with the even-size convention: mean of the two central order
// statistics. MAD thresholds are sensitive to this choice, so it is fixed
// here rather than left to callers.
inline double median(std::vector<double> values) {
    if (values.empty()) throw ValidationError("median of an empty sample");
    const std::size_t n = values.size();
    const std::size_t mid = n / 2;
    std::nth_element(values.begin(), values.begin() + mid, values.end());
    const double upper = values[mid];
    if (n % 2 == 1) return upper;
    const double lower = *std::max_element(values.begin(), values.begin() + mid);
    return 0.5 * (lower + upper);
}

inline double mad(const std::vector<double>& values) {
    const double med = median(values);
    std::vector<double> deviations;
    deviations.reserve(values.size());
    for (double v : values) deviations.push_back(std::abs(v - med));
    return median(std::move(deviations));
}

// ---------------------------------------------------------------------------
// Score normalization (Classifier evidence -> probability-like score)
// ---------------------------------------------------------------------------

// softmax([cv_pos/delay, cv_neg/delay]) at the positive coordinate. The
// per-delay normalization keeps long and short histories comparable.
inline double softmax_score(double cv_pos, double cv_neg, int delay) {
    if (delay < 1) throw ValidationError("softmax_score: no evidence yet (delay = 0)");
    const double a = cv_pos / static_cast<double>(delay);
    const double b = cv_neg / static_cast<double>(delay);
    // equivalent to e^a / (e^a + e^b), computed without large exponentials
    return 1.0 / (1.0 + std::exp(b - a));
}

// ---------------------------------------------------------------------------
// Global policy: median + gamma * MAD over the whole cohort
// ---------------------------------------------------------------------------

// Flags user u iff score_u > median(scores) + gamma * MAD(scores), strictly.
// The pool is every score in the map, including already-decided users.
inline std::map<std::string, int> global_decide(const std::map<std::string, double>& scores,
                                                const GlobalPolicyConfig& cfg) {
    if (scores.empty()) throw ValidationError("global_decide: empty cohort");
    std::vector<double> pool;
    pool.reserve(scores.size());
    for (const auto& [nick, s] : scores) pool.push_back(s);
    const double med = median(pool);
    const double spread = mad(pool);
    const double threshold = med + cfg.gamma * spread;
    std::map<std::string, int> flags;
    for (const auto& [nick, s] : scores) flags[nick] = s > threshold ? 1 : 0;
    return flags;
}

// ---------------------------------------------------------------------------
// History-based rule: sum_i I(p_i >= tau) >= T
// ---------------------------------------------------------------------------

inline void history_decide(UserDecisionState& state, double p, const HistoryPolicyConfig& cfg) {
    if (!(p >= 0.0 && p <= 1.0)) {
        throw ValidationError("history_decide: score " + std::to_string(p) +
                              " outside [0,1] for user '" + state.nick + "'");
    }
    state.score_history.push_back(p);
    if (p >= cfg.tau) state.qualifying_count += 1;
    if (!state.decided && state.qualifying_count >= cfg.required_count) {
        state.decided = true;
        state.decision_round = static_cast<int>(state.score_history.size());
    }
}

// ---------------------------------------------------------------------------
// Stream closing
// ---------------------------------------------------------------------------

// Decided users keep their decision round; everyone else becomes a negative
// at the final round.
inline std::map<std::string, DecisionOutcome> finalize(
    const std::map<std::string, UserDecisionState>& states, int last_round) {
    std::map<std::string, DecisionOutcome> records;
    for (const auto& [nick, st] : states) {
        if (st.decided) {
            records[nick] = {1, st.decision_round};
        } else {
            records[nick] = {0, last_round};
        }
    }
    return records;
}

}  // namespace erd::dmc
