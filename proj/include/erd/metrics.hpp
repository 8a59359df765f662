#pragma once

// Decision-based evaluation for early-detection runs: confusion counts,
// accuracy, macro/micro precision-recall-F1, latency-penalized error (ERDE),
// latency-discounted F1, and model agreement regions.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "erd/errors.hpp"

namespace erd::metrics {

using json = nlohmann::json;

// One user's final outcome. latency is the 1-based round of the first
// positive prediction, or the last round for users never flagged.
struct DecisionRecord {
    std::string nick;
    int decision = 0;           // 0 or 1
    int latency = 1;            // >= 1
    std::optional<int> truth;   // absent for unlabeled corpora
};

struct Confusion {
    long tp = 0, fp = 0, fn = 0, tn = 0;
    long total() const { return tp + fp + fn + tn; }
};

inline Confusion confusion(const std::vector<DecisionRecord>& records) {
    Confusion c;
    for (const auto& r : records) {
        if (!r.truth) {
            throw ValidationError("confusion: record for '" + r.nick + "' has no truth label");
        }
        const bool pred = r.decision == 1;
        const bool truth = *r.truth == 1;
        if (pred && truth) ++c.tp;
        else if (pred && !truth) ++c.fp;
        else if (!pred && truth) ++c.fn;
        else ++c.tn;
    }
    return c;
}

// ---------------------------------------------------------------------------
// Precision / recall / F1
// ---------------------------------------------------------------------------

struct PrfScores {
    double accuracy = 0.0;
    double pos_p = 0.0, pos_r = 0.0, pos_f1 = 0.0;
    double neg_p = 0.0, neg_r = 0.0, neg_f1 = 0.0;
    double macro_p = 0.0, macro_r = 0.0, macro_f1 = 0.0;
    double micro_p = 0.0, micro_r = 0.0, micro_f1 = 0.0;
};

// Per-class one-vs-rest scores with 0/0 defined as 0; macro is the
// unweighted two-class mean, micro pools both one-vs-rest tables. With one
// decision per user the pooled counts collapse to accuracy on all three
// micro scores.
inline PrfScores prf_macro_micro(const Confusion& c) {
    if (c.total() == 0) throw ValidationError("prf_macro_micro: zero users");
    const auto ratio = [](double num, double den) { return den > 0.0 ? num / den : 0.0; };
    const auto f1 = [&](double p, double r) { return ratio(2.0 * p * r, p + r); };
    PrfScores s;
    s.pos_p = ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp));
    s.pos_r = ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn));
    s.pos_f1 = f1(s.pos_p, s.pos_r);
    s.neg_p = ratio(static_cast<double>(c.tn), static_cast<double>(c.tn + c.fn));
    s.neg_r = ratio(static_cast<double>(c.tn), static_cast<double>(c.tn + c.fp));
    s.neg_f1 = f1(s.neg_p, s.neg_r);
    s.macro_p = 0.5 * (s.pos_p + s.neg_p);
    s.macro_r = 0.5 * (s.pos_r + s.neg_r);
    s.macro_f1 = 0.5 * (s.pos_f1 + s.neg_f1);
    s.accuracy = ratio(static_cast<double>(c.tp + c.tn), static_cast<double>(c.total()));
    // pooled one-vs-rest tables: TP' = tp+tn, FP' = fp+fn, FN' = fn+fp.
    // F1 comes from the pooled counts (2TP'/(2TP'+FP'+FN')) so that the
    // micro-equals-accuracy identity holds bit-exactly, not just to rounding.
    const double pooled_tp = static_cast<double>(c.tp + c.tn);
    const double pooled_fp = static_cast<double>(c.fp + c.fn);
    const double pooled_fn = static_cast<double>(c.fn + c.fp);
    s.micro_p = ratio(pooled_tp, pooled_tp + pooled_fp);
    s.micro_r = ratio(pooled_tp, pooled_tp + pooled_fn);
    s.micro_f1 = ratio(2.0 * pooled_tp, 2.0 * pooled_tp + pooled_fp + pooled_fn);
    return s;
}

// ---------------------------------------------------------------------------
// ERDE: latency-penalized error
// ---------------------------------------------------------------------------

struct ErdeConfig {
    double theta = 5.0;            // delay midpoint
    std::optional<double> c_fp;    // default: positive prevalence of the corpus
    double c_fn = 1.0;
    double c_tn = 0.0;
};

// Cost of a true positive detected at round k: the logistic latency term
// 1 - 1/(1 + e^(k - theta)), computed as 1/(1 + e^(theta - k)).
inline double erde_latency_cost(int k, double theta) {
    return 1.0 / (1.0 + std::exp(theta - static_cast<double>(k)));
}

inline double resolve_c_fp(const std::vector<DecisionRecord>& records, const ErdeConfig& cfg) {
    if (cfg.c_fp) return *cfg.c_fp;
    long positives = 0;
    for (const auto& r : records) {
        if (r.truth && *r.truth == 1) ++positives;
    }
    return records.empty() ? 0.0
                           : static_cast<double>(positives) / static_cast<double>(records.size());
}

// Mean per-user cost: TPs pay the logistic latency term, FPs pay c_fp
// (positive prevalence unless pinned), FNs pay c_fn, TNs pay c_tn.
inline double erde(const std::vector<DecisionRecord>& records, const ErdeConfig& cfg) {
    if (records.empty()) throw ValidationError("erde: no records");
    const double c_fp = resolve_c_fp(records, cfg);
    double total = 0.0;
    for (const auto& r : records) {
        if (!r.truth) {
            throw ValidationError("erde: record for '" + r.nick + "' has no truth label");
        }
        if (r.latency < 1) {
            throw ValidationError("erde: record for '" + r.nick + "' has latency < 1");
        }
        const bool pred = r.decision == 1;
        const bool truth = *r.truth == 1;
        if (pred && truth) total += erde_latency_cost(r.latency, cfg.theta);
        else if (pred && !truth) total += c_fp;
        else if (!pred && truth) total += cfg.c_fn;
        else total += cfg.c_tn;
    }
    return total / static_cast<double>(records.size());
}

// ---------------------------------------------------------------------------
// Latency-discounted F1
// ---------------------------------------------------------------------------

struct FLatencyConfig {
    double p = 0.0078;  // penalty growth rate
};

// penalty(k) = -1 + 2/(1 + e^(-p*(k-1))); zero at k = 1, approaching 1 for
// late decisions.
inline double latency_penalty(int k, double p) {
    return -1.0 + 2.0 / (1.0 + std::exp(-p * (static_cast<double>(k) - 1.0)));
}

// Positive-class F1 discounted by the median true-positive penalty. Returns
// 0 when there are no true positives.
inline double f_latency(const std::vector<DecisionRecord>& records, const FLatencyConfig& cfg) {
    if (records.empty()) throw ValidationError("f_latency: no records");
    const Confusion c = confusion(records);
    std::vector<double> penalties;
    for (const auto& r : records) {
        if (r.decision == 1 && *r.truth == 1) {
            penalties.push_back(latency_penalty(r.latency, cfg.p));
        }
    }
    if (penalties.empty()) return 0.0;
    std::sort(penalties.begin(), penalties.end());
    const std::size_t n = penalties.size();
    const double median_penalty =
        n % 2 == 1 ? penalties[n / 2] : 0.5 * (penalties[n / 2 - 1] + penalties[n / 2]);
    const PrfScores s = prf_macro_micro(c);
    return s.pos_f1 * (1.0 - median_penalty);
}

// ---------------------------------------------------------------------------
// Model agreement (Venn regions)
// ---------------------------------------------------------------------------

struct VennRegion {
    int count = 0;
    int correct = 0;  // how many of the region's users are truly positive
};

// Counts users in every inclusion-exclusion region of 2 or 3 prediction
// sets. Region keys are bitmasks: bit i set means membership in set i.
inline std::map<unsigned, VennRegion> agreement_venn(
    const std::vector<std::set<std::string>>& prediction_sets,
    const std::map<std::string, int>& truths) {
    if (prediction_sets.size() < 2 || prediction_sets.size() > 3) {
        throw ValidationError("agreement_venn: supports 2 or 3 prediction sets");
    }
    std::map<unsigned, VennRegion> regions;
    for (unsigned mask = 1; mask < (1u << prediction_sets.size()); ++mask) regions[mask];
    std::set<std::string> universe;
    for (const auto& s : prediction_sets) universe.insert(s.begin(), s.end());
    for (const auto& nick : universe) {
        unsigned mask = 0;
        for (std::size_t i = 0; i < prediction_sets.size(); ++i) {
            if (prediction_sets[i].count(nick)) mask |= 1u << i;
        }
        auto it = truths.find(nick);
        if (it == truths.end()) {
            throw ValidationError("agreement_venn: no truth for user '" + nick + "'");
        }
        regions[mask].count += 1;
        if (it->second == 1) regions[mask].correct += 1;
    }
    return regions;
}

inline json venn_to_json(const std::map<unsigned, VennRegion>& regions) {
    json doc = json::object();
    for (const auto& [mask, region] : regions) {
        doc[std::to_string(mask)] = {{"count", region.count}, {"correct", region.correct}};
    }
    return doc;
}

// ---------------------------------------------------------------------------
// Full report
// ---------------------------------------------------------------------------

struct EvaluationReport {
    Confusion counts;
    PrfScores scores;
    std::map<int, double> erde_by_theta;
    double f_latency_score = 0.0;
    double erde_c_fp = 0.0;       // the value actually used
    double f_latency_p = 0.0078;  // the value actually used
    std::vector<DecisionRecord> records;
};

inline EvaluationReport evaluate(std::vector<DecisionRecord> records,
                                 const std::vector<int>& thetas = {5, 30},
                                 const ErdeConfig& erde_base = {},
                                 const FLatencyConfig& flat_cfg = {}) {
    if (records.empty()) throw ValidationError("evaluate: no records");
    std::sort(records.begin(), records.end(),
              [](const DecisionRecord& a, const DecisionRecord& b) { return a.nick < b.nick; });
    EvaluationReport report;
    report.counts = confusion(records);
    report.scores = prf_macro_micro(report.counts);
    report.erde_c_fp = resolve_c_fp(records, erde_base);
    for (int theta : thetas) {
        ErdeConfig cfg = erde_base;
        cfg.theta = static_cast<double>(theta);
        cfg.c_fp = report.erde_c_fp;
        report.erde_by_theta[theta] = erde(records, cfg);
    }
    report.f_latency_p = flat_cfg.p;
    report.f_latency_score = f_latency(records, flat_cfg);
    report.records = std::move(records);
    return report;
}

inline json records_to_json(const std::vector<DecisionRecord>& records) {
    json arr = json::array();
    for (const auto& r : records) {
        json rec{{"nick", r.nick}, {"decision", r.decision}, {"latency", r.latency}};
        rec["truth"] = r.truth ? json(*r.truth) : json(nullptr);
        arr.push_back(std::move(rec));
    }
    return arr;
}

inline json report_to_json(const EvaluationReport& r) {
    json erde_doc = json::object();
    for (const auto& [theta, value] : r.erde_by_theta) erde_doc[std::to_string(theta)] = value;
    return json{
        {"confusion", {{"tp", r.counts.tp}, {"fp", r.counts.fp}, {"fn", r.counts.fn}, {"tn", r.counts.tn}}},
        {"scores",
         {{"accuracy", r.scores.accuracy},
          {"pos_p", r.scores.pos_p},
          {"pos_r", r.scores.pos_r},
          {"pos_f1", r.scores.pos_f1},
          {"neg_p", r.scores.neg_p},
          {"neg_r", r.scores.neg_r},
          {"neg_f1", r.scores.neg_f1},
          {"macro_p", r.scores.macro_p},
          {"macro_r", r.scores.macro_r},
          {"macro_f1", r.scores.macro_f1},
          {"micro_p", r.scores.micro_p},
          {"micro_r", r.scores.micro_r},
          {"micro_f1", r.scores.micro_f1}}},
        {"erde", erde_doc},
        {"f_latency", r.f_latency_score},
        {"assumptions",
         {{"erde_c_fp", r.erde_c_fp}, {"erde_c_fn", 1.0}, {"erde_c_tn", 0.0},
          {"f_latency_p", r.f_latency_p}}},
        {"records", records_to_json(r.records)},
    };
}

// Per-user CSV: nick,truth,decision,latency
inline std::string records_to_csv(const std::vector<DecisionRecord>& records) {
    std::string out = "nick,truth,decision,latency\n";
    for (const auto& r : records) {
        out += r.nick;
        out += ',';
        out += r.truth ? std::to_string(*r.truth) : std::string();
        out += ',';
        out += std::to_string(r.decision);
        out += ',';
        out += std::to_string(r.latency);
        out += '\n';
    }
    return out;
}

}  // namespace erd::metrics
