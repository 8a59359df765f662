#pragma once

// Mock-server for early-detection evaluation: exposes a corpus round by
// round over HTTP, enforces respond-before-advance lockstep, records sticky
// positive decisions, and produces the final evaluation report.
//
// Round r carries each active user's r-th post (1-based position in their
// timeline); users whose timelines are exhausted drop out of later rounds.
// Sessions are in-memory and independent of each other.

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "erd/corpus.hpp"
#include "erd/errors.hpp"
#include "erd/metrics.hpp"
#include "erd/protocol.hpp"

namespace erd::server {

using json = nlohmann::json;

// Error carrying an HTTP status and a stable machine-readable code.
struct ApiError {
    int status;
    std::string code;
    std::string detail;
};

// ---------------------------------------------------------------------------
// Session: one client's pass over a corpus
// ---------------------------------------------------------------------------

class Session {
public:
    explicit Session(std::shared_ptr<const std::vector<UserTimeline>> corpus)
        : corpus_(std::move(corpus)) {
        for (const auto& tl : *corpus_) {
            max_rounds_ = std::max(max_rounds_, static_cast<int>(tl.posts.size()));
        }
    }

    int n_users() const { return static_cast<int>(corpus_->size()); }
    int current_round() const { return current_round_; }
    bool exhausted() const { return current_round_ > max_rounds_; }

    // Returns the current round's batch. Idempotent until answered. A
    // requested round other than the current one is a lockstep violation.
    protocol::RoundMessage round(std::optional<int> requested) const {
        if (requested && *requested != current_round_) {
            throw ApiError{409, "round_conflict",
                           "requested round " + std::to_string(*requested) +
                               " but current round is " + std::to_string(current_round_)};
        }
        protocol::RoundMessage msg;
        msg.round = current_round_;
        if (exhausted()) {
            msg.done = true;
            return msg;
        }
        msg.remaining_rounds_hint = max_rounds_ - current_round_;
        for (const auto& tl : *corpus_) {
            if (static_cast<int>(tl.posts.size()) < current_round_) continue;
            const Post& p = tl.posts[static_cast<std::size_t>(current_round_ - 1)];
            msg.messages.push_back(
                {tl.nick, p.message, p.date, std::string(to_string(p.platform))});
        }
        return msg;
    }

    // Validates and applies a response for the current round, then advances.
    // The first positive prediction for a user freezes their decision.
    int respond(const protocol::RoundResponse& resp) {
        if (exhausted()) {
            throw ApiError{409, "session_complete", "all rounds already answered"};
        }
        if (resp.round != current_round_) {
            throw ApiError{409, "round_conflict",
                           "response for round " + std::to_string(resp.round) +
                               " but current round is " + std::to_string(current_round_)};
        }
        std::set<std::string> served;
        for (const auto& tl : *corpus_) {
            if (static_cast<int>(tl.posts.size()) >= current_round_) served.insert(tl.nick);
        }
        std::string missing, unknown;
        for (const auto& nick : served) {
            if (!resp.predictions.count(nick)) {
                if (!missing.empty()) missing += ", ";
                missing += nick;
            }
        }
        for (const auto& [nick, v] : resp.predictions) {
            if (!served.count(nick)) {
                if (!unknown.empty()) unknown += ", ";
                unknown += nick;
            }
            if (v != 0 && v != 1) {
                throw ApiError{400, "bad_prediction",
                               "prediction for '" + nick + "' must be 0 or 1"};
            }
        }
        if (!missing.empty()) {
            throw ApiError{400, "missing_nicks", "response lacks predictions for: " + missing};
        }
        if (!unknown.empty()) {
            throw ApiError{400, "unknown_nicks", "response names unserved users: " + unknown};
        }
        if (!resp.scores.empty()) {
            for (const auto& nick : served) {
                if (!resp.scores.count(nick)) {
                    throw ApiError{400, "missing_scores",
                                   "scores present but lack user '" + nick + "'"};
                }
            }
            for (const auto& [nick, s] : resp.scores) {
                if (!served.count(nick)) {
                    throw ApiError{400, "unknown_nicks", "scores name unserved user '" + nick + "'"};
                }
                if (!(s >= 0.0 && s <= 1.0)) {
                    throw ApiError{400, "bad_score",
                                   "score for '" + nick + "' outside [0,1]"};
                }
            }
        }
        for (const auto& [nick, v] : resp.predictions) {
            if (v == 1 && !decisions_.count(nick)) {
                decisions_[nick] = current_round_;
            }
        }
        response_log_.push_back(resp);
        const int accepted = current_round_;
        current_round_ += 1;
        return accepted;
    }

    // Final decision records: decided users keep (1, round); everyone else
    // is (0, last round of the stream).
    std::vector<metrics::DecisionRecord> decision_records() const {
        std::vector<metrics::DecisionRecord> records;
        records.reserve(corpus_->size());
        for (const auto& tl : *corpus_) {
            metrics::DecisionRecord rec;
            rec.nick = tl.nick;
            auto it = decisions_.find(tl.nick);
            if (it != decisions_.end()) {
                rec.decision = 1;
                rec.latency = it->second;
            } else {
                rec.decision = 0;
                rec.latency = std::max(max_rounds_, 1);
            }
            if (tl.label) rec.truth = tl.label == Label::positive ? 1 : 0;
            records.push_back(std::move(rec));
        }
        return records;
    }

    json results() const {
        if (!exhausted()) {
            throw ApiError{409, "session_incomplete",
                           "round " + std::to_string(current_round_) + " of " +
                               std::to_string(max_rounds_) + " not answered yet"};
        }
        auto records = decision_records();
        bool fully_labeled = !records.empty();
        for (const auto& r : records) fully_labeled = fully_labeled && r.truth.has_value();
        json doc;
        doc["n_users"] = static_cast<int>(records.size());
        doc["last_round"] = max_rounds_;
        doc["labeled"] = fully_labeled;
        if (fully_labeled) {
            doc.update(metrics::report_to_json(metrics::evaluate(records)));
        } else {
            std::sort(records.begin(), records.end(),
                      [](const auto& a, const auto& b) { return a.nick < b.nick; });
            doc["records"] = metrics::records_to_json(records);
        }
        return doc;
    }

private:
    std::shared_ptr<const std::vector<UserTimeline>> corpus_;
    int max_rounds_ = 0;
    int current_round_ = 1;
    std::map<std::string, int> decisions_;  // nick -> round of first positive
    std::vector<protocol::RoundResponse> response_log_;
};

// ---------------------------------------------------------------------------
// MockServer: corpus registry + session store (protocol core, no HTTP)
// ---------------------------------------------------------------------------

class MockServer {
public:
    // Corpora are immutable once registered; sessions share them.
    void register_corpus(const std::string& corpus_id, std::vector<UserTimeline> timelines) {
        std::lock_guard lock(mutex_);
        corpora_[corpus_id] =
            std::make_shared<const std::vector<UserTimeline>>(std::move(timelines));
    }

    struct Created {
        std::string session_id;
        int n_users;
    };

    // Empty corpus_id selects the sole registered corpus, if unambiguous.
    Created create_session(const std::string& corpus_id) {
        std::lock_guard lock(mutex_);
        std::shared_ptr<const std::vector<UserTimeline>> corpus;
        if (corpus_id.empty()) {
            if (corpora_.size() != 1) {
                throw ApiError{400, "corpus_required",
                               "corpus_id required when multiple corpora are loaded"};
            }
            corpus = corpora_.begin()->second;
        } else {
            auto it = corpora_.find(corpus_id);
            if (it == corpora_.end()) {
                throw ApiError{404, "unknown_corpus", "no corpus '" + corpus_id + "'"};
            }
            corpus = it->second;
        }
        const std::string id = "s" + std::to_string(next_id_++);
        auto handle = std::make_shared<Handle>(Session(std::move(corpus)));
        sessions_[id] = handle;
        return {id, handle->session.n_users()};
    }

    protocol::RoundMessage round(const std::string& session_id, std::optional<int> requested) {
        auto handle = find(session_id);
        std::lock_guard lock(handle->mutex);
        return handle->session.round(requested);
    }

    int respond(const std::string& session_id, const protocol::RoundResponse& resp) {
        auto handle = find(session_id);
        std::lock_guard lock(handle->mutex);
        return handle->session.respond(resp);
    }

    json results(const std::string& session_id) {
        auto handle = find(session_id);
        std::lock_guard lock(handle->mutex);
        return handle->session.results();
    }

private:
    struct Handle {
        explicit Handle(Session s) : session(std::move(s)) {}
        Session session;
        std::mutex mutex;  // serializes round transitions within the session
    };

    std::shared_ptr<Handle> find(const std::string& session_id) {
        std::lock_guard lock(mutex_);
        auto it = sessions_.find(session_id);
        if (it == sessions_.end()) {
            throw ApiError{404, "unknown_session", "no session '" + session_id + "'"};
        }
        return it->second;
    }

    std::mutex mutex_;
    std::map<std::string, std::shared_ptr<const std::vector<UserTimeline>>> corpora_;
    std::map<std::string, std::shared_ptr<Handle>> sessions_;
    std::uint64_t next_id_ = 1;
};

// ---------------------------------------------------------------------------
// HTTP adapter
// ---------------------------------------------------------------------------

class HttpServer {
public:
    explicit HttpServer(MockServer& core) : core_(core) { install_routes(); }

    // Blocking listen on a fixed address (CLI entry point).
    bool listen(const std::string& bind_addr, int port) { return http_.listen(bind_addr, port); }

    // Binds an ephemeral local port and serves on a background thread.
    // Returns the bound port. Intended for tests and in-process use.
    int start_async(const std::string& bind_addr = "127.0.0.1") {
        const int port = http_.bind_to_any_port(bind_addr);
        if (port <= 0) throw Error("failed to bind mock server port");
        thread_ = std::thread([this] { http_.listen_after_bind(); });
        http_.wait_until_ready();
        return port;
    }

    void stop() {
        http_.stop();
        if (thread_.joinable()) thread_.join();
    }

    ~HttpServer() { stop(); }

private:
    static void reply(httplib::Response& res, int status, const json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    static void reply_error(httplib::Response& res, const ApiError& e) {
        reply(res, e.status, json{{"error", e.code}, {"detail", e.detail}});
    }

    template <typename Fn>
    static void guarded(httplib::Response& res, Fn&& fn) {
        try {
            fn();
        } catch (const ApiError& e) {
            reply_error(res, e);
        } catch (const json::exception& e) {
            reply_error(res, {400, "bad_json", e.what()});
        } catch (const SchemaError& e) {
            reply_error(res, {400, "bad_schema", e.what()});
        } catch (const std::exception& e) {
            reply_error(res, {500, "internal_error", e.what()});
        }
    }

    void install_routes() {
        http_.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                std::string corpus_id;
                if (!req.body.empty()) {
                    const json body = json::parse(req.body);
                    corpus_id = body.value("corpus_id", "");
                }
                const auto created = core_.create_session(corpus_id);
                reply(res, 201,
                      json{{"session_id", created.session_id}, {"n_users", created.n_users}});
            });
        });

        http_.Get(R"(/sessions/([^/]+)/round)",
                  [this](const httplib::Request& req, httplib::Response& res) {
                      guarded(res, [&] {
                          std::optional<int> requested;
                          if (req.has_param("round")) {
                              try {
                                  requested = std::stoi(req.get_param_value("round"));
                              } catch (...) {
                                  throw ApiError{400, "bad_round", "round must be an integer"};
                              }
                          }
                          reply(res, 200,
                                protocol::to_json(core_.round(req.matches[1], requested)));
                      });
                  });

        http_.Post(R"(/sessions/([^/]+)/responses)",
                   [this](const httplib::Request& req, httplib::Response& res) {
                       guarded(res, [&] {
                           const auto resp =
                               protocol::round_response_from_json(json::parse(req.body));
                           const int accepted = core_.respond(req.matches[1], resp);
                           reply(res, 200, json{{"accepted_round", accepted}});
                       });
                   });

        http_.Get(R"(/sessions/([^/]+)/results)",
                  [this](const httplib::Request& req, httplib::Response& res) {
                      guarded(res, [&] { reply(res, 200, core_.results(req.matches[1])); });
                  });
    }

    MockServer& core_;
    httplib::Server http_;
    std::thread thread_;
};

}  // namespace erd::server
