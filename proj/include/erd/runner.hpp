#pragma once

// Client-side orchestration: drives a scoring model (in-process SS3 or a
// replayed score stream) plus a decision policy through a mock-server
// session, then writes run logs, trajectory exports, and the final report.
//
// The runner checkpoints its state to <out>/state.json before submitting
// each round, so a killed client can resume and finish with outputs
// byte-identical to an uninterrupted run. Timing is kept out of the
// deterministic outputs and written separately to meta.json.

#include <charconv>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "erd/config.hpp"
#include "erd/corpus.hpp"
#include "erd/dmc.hpp"
#include "erd/errors.hpp"
#include "erd/metrics.hpp"
#include "erd/protocol.hpp"
#include "erd/ss3.hpp"
#include "erd/text.hpp"

namespace erd::runner {

using json = nlohmann::json;

enum class ModelKind { ss3, replay };
enum class PolicyKind { global, history };

struct PipelineConfig {
    ModelKind model = ModelKind::ss3;
    std::string model_path;  // ss3 model JSON
    std::string score_file;  // replay CSV (nick,round,score)
    PolicyKind policy = PolicyKind::global;
    dmc::GlobalPolicyConfig global_cfg;
    dmc::HistoryPolicyConfig history_cfg;
    int window_n = 9;  // used by replay preparation, not by SS3 scoring
    std::string server_url = "http://127.0.0.1:8080";
    std::string corpus_id;
    std::string output_dir = "run";
    std::uint64_t seed = 0;
    bool resume = false;
    // Stop after this many rounds are answered (resume later). Used for
    // pause/restart flows and crash-recovery tests.
    std::optional<int> stop_after_round;
};

inline ModelKind model_kind_from(const std::string& s) {
    if (s == "ss3") return ModelKind::ss3;
    if (s == "replay") return ModelKind::replay;
    throw ValidationError("unknown model kind '" + s + "' (expected ss3 or replay)");
}

inline PolicyKind policy_kind_from(const std::string& s) {
    if (s == "global") return PolicyKind::global;
    if (s == "history") return PolicyKind::history;
    throw ValidationError("unknown policy kind '" + s + "' (expected global or history)");
}

inline PipelineConfig pipeline_config_from(const Config& cfg) {
    PipelineConfig pc;
    pc.model = model_kind_from(cfg.get_or("model", "kind", "ss3"));
    pc.model_path = cfg.get_or("model", "path", "");
    pc.score_file = cfg.get_or("model", "scores", "");
    pc.policy = policy_kind_from(cfg.get_or("policy", "kind", "global"));
    pc.global_cfg.gamma = cfg.get_double("policy", "gamma", pc.global_cfg.gamma);
    pc.history_cfg.tau = cfg.get_double("policy", "tau", pc.history_cfg.tau);
    pc.history_cfg.required_count = cfg.get_int("policy", "T", pc.history_cfg.required_count);
    pc.window_n = cfg.get_int("run", "window_n", pc.window_n);
    pc.server_url = cfg.get_or("server", "url", pc.server_url);
    pc.corpus_id = cfg.get_or("server", "corpus_id", "");
    pc.output_dir = cfg.get_or("run", "out", pc.output_dir);
    pc.seed = static_cast<std::uint64_t>(cfg.get_int("run", "seed", 0));
    return pc;
}

// ---------------------------------------------------------------------------
// Small CSV helpers (RFC-4180 style quoting)
// ---------------------------------------------------------------------------

inline std::string csv_quote(const std::string& field) {
    if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out.push_back('"');
    return out;
}

inline std::vector<std::string> csv_split(const std::string& line) {
    std::vector<std::string> fields;
    std::string current;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    current.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                current.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(current));
            current.clear();
        } else if (c != '\r') {
            current.push_back(c);
        }
    }
    fields.push_back(std::move(current));
    return fields;
}

inline std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

// ---------------------------------------------------------------------------
// Replay score table
// ---------------------------------------------------------------------------

class ScoreTable {
public:
    static ScoreTable parse(std::string_view content) {
        ScoreTable table;
        std::size_t line_no = 0;
        std::size_t start = 0;
        while (start <= content.size()) {
            std::size_t end = content.find('\n', start);
            if (end == std::string_view::npos) end = content.size();
            std::string line(content.substr(start, end - start));
            ++line_no;
            const bool last = end == content.size();
            start = end + 1;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!line.empty()) {
                if (line_no == 1) {
                    if (csv_split(line) != std::vector<std::string>{"nick", "round", "score"}) {
                        throw ParseError("score file: expected header 'nick,round,score'");
                    }
                } else {
                    const auto fields = csv_split(line);
                    if (fields.size() != 3) {
                        throw ParseError("score file line " + std::to_string(line_no) +
                                         ": expected 3 fields");
                    }
                    int round = 0;
                    double score = 0.0;
                    try {
                        round = std::stoi(fields[1]);
                        score = std::stod(fields[2]);
                    } catch (...) {
                        throw ParseError("score file line " + std::to_string(line_no) +
                                         ": bad round or score");
                    }
                    if (!(score >= 0.0 && score <= 1.0)) {
                        throw ParseError("score file line " + std::to_string(line_no) +
                                         ": score outside [0,1]");
                    }
                    table.scores_[{fields[0], round}] = score;
                }
            }
            if (last) break;
        }
        return table;
    }

    static ScoreTable load(const std::string& path) { return parse(read_file(path)); }

    double at(const std::string& nick, int round) const {
        auto it = scores_.find({nick, round});
        if (it == scores_.end()) {
            throw ValidationError("score file has no entry for user '" + nick + "' at round " +
                                  std::to_string(round));
        }
        return it->second;
    }

    bool empty() const { return scores_.empty(); }

private:
    std::map<std::pair<std::string, int>, double> scores_;
};

// ---------------------------------------------------------------------------
// Sliding window for replay preparation
// ---------------------------------------------------------------------------

// Last min(n, available) prior posts plus the current one, oldest first,
// joined with single spaces.
inline std::string build_window(const std::vector<std::string>& priors, const std::string& current,
                                int n) {
    if (n < 0) throw ValidationError("build_window: n must be >= 0");
    std::string out;
    const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(n), priors.size());
    for (std::size_t i = priors.size() - take; i < priors.size(); ++i) {
        out += priors[i];
        out.push_back(' ');
    }
    out += current;
    return out;
}

// CSV of windowed texts (nick,round,text) for scoring by an external
// classifier; the scored result feeds back in as a replay score file.
inline std::string replay_prepare(const std::vector<UserTimeline>& timelines, int window_n) {
    std::string out = "nick,round,text\n";
    for (const auto& tl : timelines) {
        std::vector<std::string> priors;
        for (std::size_t i = 0; i < tl.posts.size(); ++i) {
            const std::string window = build_window(priors, tl.posts[i].message, window_n);
            out += csv_quote(tl.nick);
            out += ',';
            out += std::to_string(i + 1);
            out += ',';
            out += csv_quote(window);
            out += '\n';
            priors.push_back(tl.posts[i].message);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Run log
// ---------------------------------------------------------------------------

struct RoundLog {
    int round = 0;
    std::vector<std::string> served;
    std::map<std::string, double> scores;
    std::map<std::string, int> decisions;
    double wall_ms = 0.0;  // reported via meta.json only
};

struct RunLog {
    std::vector<RoundLog> rounds;
};

inline json round_log_to_json(const RoundLog& r) {
    return json{{"round", r.round},
                {"served", r.served},
                {"scores", r.scores},
                {"decisions", r.decisions}};
}

inline RoundLog round_log_from_json(const json& doc) {
    RoundLog r;
    r.round = doc.at("round").get<int>();
    r.served = doc.at("served").get<std::vector<std::string>>();
    for (const auto& [nick, v] : doc.at("scores").items()) r.scores[nick] = v.get<double>();
    for (const auto& [nick, v] : doc.at("decisions").items()) r.decisions[nick] = v.get<int>();
    return r;
}

// One row per round served to the user: round, score, decided flag (true
// from the decision round onward).
inline std::string export_trajectory(const RunLog& log, const std::string& nick) {
    std::string out = "round,score,decided\n";
    bool seen = false;
    std::optional<int> decision_round;
    for (const auto& r : log.rounds) {
        auto it = r.scores.find(nick);
        if (it == r.scores.end()) continue;
        seen = true;
        const auto dit = r.decisions.find(nick);
        if (!decision_round && dit != r.decisions.end() && dit->second == 1) {
            decision_round = r.round;
        }
        const bool decided = decision_round && r.round >= *decision_round;
        out += std::to_string(r.round);
        out += ',';
        out += format_double(it->second);
        out += ',';
        out += decided ? '1' : '0';
        out += '\n';
    }
    if (!seen) throw ValidationError("export_trajectory: unknown nick '" + nick + "'");
    return out;
}

// Interpretability traces: per-text ordered term contributions plus the
// running positive confidence trajectory.
inline json export_explanations(const ss3::Model& model, const std::vector<std::string>& texts) {
    json docs = json::array();
    for (const auto& raw : texts) {
        const std::string prepared = text::preprocess(raw);
        const ss3::Explanation ex = ss3::explain(model, prepared);
        json terms = json::array();
        for (const auto& c : ex.contributions) {
            terms.push_back(
                {{"term", c.term}, {"gv_positive", c.gv_positive}, {"gv_negative", c.gv_negative}});
        }
        docs.push_back({{"text", raw},
                        {"preprocessed", prepared},
                        {"contributions", std::move(terms)},
                        {"cv_pos_trajectory", ex.cv_pos_trajectory}});
    }
    return json{{"explanations", std::move(docs)}};
}

// ---------------------------------------------------------------------------
// Pipeline state (checkpointed every round)
// ---------------------------------------------------------------------------

namespace detail {

struct ClientState {
    std::string session_id;
    int rounds_processed = 0;
    std::map<std::string, ss3::ConfidenceState> cv;
    std::map<std::string, dmc::UserDecisionState> decisions;
    std::optional<protocol::RoundResponse> pending;  // computed, maybe unacked
    RunLog log;
};

inline json state_to_json(const ClientState& st) {
    json cv = json::object();
    for (const auto& [nick, s] : st.cv) {
        cv[nick] = {{"cv_pos", s.cv_pos}, {"cv_neg", s.cv_neg}, {"delay", s.delay}};
    }
    json decisions = json::object();
    for (const auto& [nick, d] : st.decisions) {
        decisions[nick] = {{"scores", d.score_history},
                           {"qualifying", d.qualifying_count},
                           {"decided", d.decided},
                           {"decision_round", d.decision_round}};
    }
    json rounds = json::array();
    for (const auto& r : st.log.rounds) rounds.push_back(round_log_to_json(r));
    json doc{{"session_id", st.session_id},
             {"rounds_processed", st.rounds_processed},
             {"cv", std::move(cv)},
             {"decisions", std::move(decisions)},
             {"log", std::move(rounds)}};
    doc["pending"] = st.pending ? protocol::to_json(*st.pending) : json(nullptr);
    return doc;
}

inline ClientState state_from_json(const json& doc) {
    ClientState st;
    st.session_id = doc.at("session_id").get<std::string>();
    st.rounds_processed = doc.at("rounds_processed").get<int>();
    for (const auto& [nick, s] : doc.at("cv").items()) {
        st.cv[nick] = {s.at("cv_pos").get<double>(), s.at("cv_neg").get<double>(),
                       s.at("delay").get<int>()};
    }
    for (const auto& [nick, d] : doc.at("decisions").items()) {
        dmc::UserDecisionState uds;
        uds.nick = nick;
        uds.score_history = d.at("scores").get<std::vector<double>>();
        uds.qualifying_count = d.at("qualifying").get<int>();
        uds.decided = d.at("decided").get<bool>();
        uds.decision_round = d.at("decision_round").get<int>();
        st.decisions[nick] = std::move(uds);
    }
    if (!doc.at("pending").is_null()) {
        st.pending = protocol::round_response_from_json(doc["pending"]);
    }
    for (const auto& r : doc.at("log")) st.log.rounds.push_back(round_log_from_json(r));
    return st;
}

inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write '" + tmp.string() + "'");
        out << content;
    }
    std::filesystem::rename(tmp, path);
}

inline std::string sanitize_filename(const std::string& name) {
    std::string out;
    for (char c : name) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                        (c >= '0' && c <= '9') || c == '-' || c == '_' || c == '.';
        out.push_back(ok ? c : '_');
    }
    return out.empty() ? "_" : out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

struct RunResult {
    RunLog log;
    json report;          // server-side results (empty if paused)
    std::map<std::string, dmc::DecisionOutcome> local_records;
    bool paused = false;  // stopped via stop_after_round before exhaustion
    int last_round = 0;
};

namespace detail {

class ServerClient {
public:
    explicit ServerClient(const std::string& url) : http_(url) {
        http_.set_connection_timeout(10);
        http_.set_read_timeout(60);
    }

    json post(const std::string& path, const json& body) {
        auto res = http_.Post(path, body.dump(), "application/json");
        return unwrap(res, "POST " + path);
    }

    json get(const std::string& path) {
        auto res = http_.Get(path);
        return unwrap(res, "GET " + path);
    }

private:
    static json unwrap(const httplib::Result& res, const std::string& what) {
        if (!res) {
            throw Error(what + ": connection failed (" + httplib::to_string(res.error()) + ")");
        }
        json body;
        if (!res->body.empty()) {
            try {
                body = json::parse(res->body);
            } catch (const json::parse_error&) {
                throw Error(what + ": non-JSON response (status " + std::to_string(res->status) +
                            ")");
            }
        }
        if (res->status >= 400) {
            throw Error(what + ": server error " + std::to_string(res->status) + " " +
                        body.value("error", "") + " (" + body.value("detail", "") + ")");
        }
        return body;
    }

    httplib::Client http_;
};

}  // namespace detail

// Drives one full session. Deterministic for a fixed corpus, model, and
// config; all timing lands in meta.json only.
inline RunResult run_pipeline(const PipelineConfig& cfg) {
    namespace fs = std::filesystem;
    const fs::path out_dir(cfg.output_dir);
    fs::create_directories(out_dir);
    const fs::path state_path = out_dir / "state.json";

    // model artifacts
    std::optional<ss3::Model> model;
    std::optional<ScoreTable> scores;
    if (cfg.model == ModelKind::ss3) {
        if (cfg.model_path.empty()) throw ValidationError("run_pipeline: model path required");
        model = ss3::load_model(cfg.model_path);
    } else {
        if (cfg.score_file.empty()) throw ValidationError("run_pipeline: score file required");
        scores = ScoreTable::load(cfg.score_file);
    }

    detail::ServerClient client(cfg.server_url);
    detail::ClientState st;
    if (cfg.resume && fs::exists(state_path)) {
        st = detail::state_from_json(json::parse(read_file(state_path)));
    } else {
        json body = json::object();
        if (!cfg.corpus_id.empty()) body["corpus_id"] = cfg.corpus_id;
        const json created = client.post("/sessions", body);
        st.session_id = created.at("session_id").get<std::string>();
    }

    std::map<int, double> wall_ms_by_round;
    bool done = false;
    while (!done) {
        const json round_doc = client.get("/sessions/" + st.session_id + "/round");
        const protocol::RoundMessage msg = protocol::round_message_from_json(round_doc);
        if (msg.done) {
            done = true;
            break;
        }
        if (st.pending && st.pending->round == msg.round) {
            // crash happened after checkpoint but before the ack landed
            client.post("/sessions/" + st.session_id + "/responses",
                        protocol::to_json(*st.pending));
            st.pending.reset();
            continue;
        }
        if (msg.round != st.rounds_processed + 1) {
            throw Error("lockstep mismatch: server at round " + std::to_string(msg.round) +
                        ", client processed " + std::to_string(st.rounds_processed));
        }
        const auto t0 = std::chrono::steady_clock::now();

        RoundLog entry;
        entry.round = msg.round;
        std::map<std::string, double> round_scores;
        for (const auto& item : msg.messages) {
            entry.served.push_back(item.nick);
            double score = 0.0;
            if (cfg.model == ModelKind::ss3) {
                ss3::ConfidenceState& state = st.cv[item.nick];
                ss3::accumulate(state, *model, text::preprocess(item.message));
                score = dmc::softmax_score(state.cv_pos, state.cv_neg, state.delay);
            } else {
                score = scores->at(item.nick, msg.round);
            }
            round_scores[item.nick] = score;
        }

        protocol::RoundResponse resp;
        resp.round = msg.round;
        resp.scores = round_scores;
        if (cfg.policy == PolicyKind::global && !round_scores.empty()) {
            const auto flags = dmc::global_decide(round_scores, cfg.global_cfg);
            for (const auto& [nick, score] : round_scores) {
                dmc::UserDecisionState& uds = st.decisions[nick];
                if (uds.nick.empty()) uds.nick = nick;
                uds.score_history.push_back(score);
                if (!uds.decided && flags.at(nick) == 1) {
                    uds.decided = true;
                    uds.decision_round = msg.round;
                }
            }
        } else if (cfg.policy == PolicyKind::history) {
            // A user's served rounds form a prefix of the session rounds, so
            // the per-user history index and the server round coincide.
            for (const auto& [nick, score] : round_scores) {
                dmc::UserDecisionState& uds = st.decisions[nick];
                if (uds.nick.empty()) uds.nick = nick;
                dmc::history_decide(uds, score, cfg.history_cfg);
            }
        }
        for (const auto& [nick, score] : round_scores) {
            const auto& uds = st.decisions[nick];
            resp.predictions[nick] = uds.decided ? 1 : 0;
            entry.decisions[nick] = uds.decided ? 1 : 0;
        }
        entry.scores = std::move(round_scores);
        entry.wall_ms = std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - t0)
                            .count();
        wall_ms_by_round[entry.round] = entry.wall_ms;

        st.log.rounds.push_back(entry);
        st.rounds_processed = msg.round;
        st.pending = resp;
        detail::atomic_write(state_path, detail::state_to_json(st).dump());

        client.post("/sessions/" + st.session_id + "/responses", protocol::to_json(resp));
        st.pending.reset();

        if (cfg.stop_after_round && msg.round >= *cfg.stop_after_round) {
            RunResult paused;
            paused.log = st.log;
            paused.paused = true;
            paused.last_round = msg.round;
            return paused;
        }
    }

    RunResult result;
    result.log = st.log;
    result.last_round = st.rounds_processed;
    result.local_records = dmc::finalize(st.decisions, st.rounds_processed);
    result.report = client.get("/sessions/" + st.session_id + "/results");

    // deterministic outputs
    std::string runlog;
    for (const auto& r : result.log.rounds) {
        runlog += round_log_to_json(r).dump();
        runlog.push_back('\n');
    }
    detail::atomic_write(out_dir / "runlog.jsonl", runlog);
    detail::atomic_write(out_dir / "report.json", result.report.dump(2) + "\n");
    const fs::path traj_dir = out_dir / "trajectories";
    fs::create_directories(traj_dir);
    std::set<std::string> all_nicks;
    for (const auto& r : result.log.rounds)
        for (const auto& nick : r.served) all_nicks.insert(nick);
    for (const auto& nick : all_nicks) {
        detail::atomic_write(traj_dir / (detail::sanitize_filename(nick) + ".csv"),
                             export_trajectory(result.log, nick));
    }

    // timing metadata, separate from the deterministic outputs
    json meta{{"session_id", st.session_id},
              {"rounds", st.rounds_processed},
              {"wall_ms_by_round", json::object()}};
    for (const auto& [round, ms] : wall_ms_by_round) {
        meta["wall_ms_by_round"][std::to_string(round)] = ms;
    }
    detail::atomic_write(out_dir / "meta.json", meta.dump(2) + "\n");
    return result;
}

// ---------------------------------------------------------------------------
// Offline evaluation of a run log
// ---------------------------------------------------------------------------

// Rebuilds sticky decision records from a runlog.jsonl produced by
// run_pipeline and evaluates them against a label file.
inline json eval_runlog(const std::string& runlog_path, const std::string& labels_path) {
    const std::string content = read_file(runlog_path);
    const auto labels = load_labels(labels_path);
    std::map<std::string, std::optional<int>> first_positive;
    int last_round = 0;
    std::size_t start = 0;
    while (start < content.size()) {
        std::size_t end = content.find('\n', start);
        if (end == std::string::npos) end = content.size();
        const std::string line = content.substr(start, end - start);
        start = end + 1;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const RoundLog r = round_log_from_json(json::parse(line));
        last_round = std::max(last_round, r.round);
        for (const auto& [nick, d] : r.decisions) {
            auto& fp = first_positive[nick];
            if (d == 1 && !fp) fp = r.round;
        }
    }
    if (first_positive.empty()) throw ValidationError("eval_runlog: empty run log");
    std::vector<metrics::DecisionRecord> records;
    for (const auto& [nick, fp] : first_positive) {
        metrics::DecisionRecord rec;
        rec.nick = nick;
        rec.decision = fp ? 1 : 0;
        rec.latency = fp ? *fp : last_round;
        auto it = labels.find(nick);
        if (it == labels.end()) {
            throw ValidationError("eval_runlog: no label for user '" + nick + "'");
        }
        rec.truth = it->second == Label::positive ? 1 : 0;
        records.push_back(std::move(rec));
    }
    json doc;
    doc["n_users"] = static_cast<int>(records.size());
    doc["last_round"] = last_round;
    doc["labeled"] = true;
    doc.update(metrics::report_to_json(metrics::evaluate(records)));
    return doc;
}

}  // namespace erd::runner
