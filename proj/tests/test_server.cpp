#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <string>
#include <vector>

#include <httplib.h>

#include "erd/server.hpp"
#include "support/synthetic.hpp"

using namespace erd;
using erd::server::ApiError;

namespace {

// Answers the current round with the given constant prediction.
protocol::RoundResponse all_answer(const protocol::RoundMessage& msg, int prediction) {
    protocol::RoundResponse resp;
    resp.round = msg.round;
    for (const auto& item : msg.messages) {
        resp.predictions[item.nick] = prediction;
        resp.scores[item.nick] = prediction == 1 ? 0.9 : 0.1;
    }
    return resp;
}

std::unique_ptr<server::MockServer> make_server(std::vector<UserTimeline> corpus,
                                                const std::string& id = "test") {
    auto core = std::make_unique<server::MockServer>();
    core->register_corpus(id, std::move(corpus));
    return core;
}

}  // namespace

TEST_CASE("create_session reports corpus size and validates ids") {
    auto corpus = testsupport::separable_corpus({.n_users = 160,
                                                 .n_pos = 83,
                                                 .posts_per_user = 3,
                                                 .lexicon_size = 6,
                                                 .words_per_post = 3});
    auto core_ptr = make_server(std::move(corpus));
    auto& core = *core_ptr;
    const auto created = core.create_session("test");
    CHECK(created.n_users == 160);
    CHECK_FALSE(created.session_id.empty());

    CHECK_THROWS_AS(core.create_session("nope"), ApiError);
    // single loaded corpus: empty id selects it
    CHECK(core.create_session("").n_users == 160);
}

TEST_CASE("sessions on one corpus have independent cursors") {
    auto core_ptr = make_server(testsupport::separable_corpus(
        {.n_users = 3, .n_pos = 1, .posts_per_user = 2, .lexicon_size = 5, .words_per_post = 3}));
    auto& core = *core_ptr;
    const auto s1 = core.create_session("test");
    const auto s2 = core.create_session("test");
    const auto msg1 = core.round(s1.session_id, {});
    core.respond(s1.session_id, all_answer(msg1, 0));
    CHECK(core.round(s1.session_id, {}).round == 2);
    CHECK(core.round(s2.session_id, {}).round == 1);
}

TEST_CASE("round serving follows the lockstep contract") {
    auto core_ptr = make_server(testsupport::separable_corpus(
        {.n_users = 3, .n_pos = 1, .posts_per_user = 3, .lexicon_size = 5, .words_per_post = 3}));
    auto& core = *core_ptr;
    const auto s = core.create_session("test").session_id;

    SECTION("round 1 of a 3-user corpus carries 3 messages") {
        const auto msg = core.round(s, {});
        CHECK(msg.round == 1);
        CHECK(msg.messages.size() == 3);
        CHECK_FALSE(msg.done);
    }
    SECTION("repeat fetches before answering return the identical payload") {
        const auto a = protocol::to_json(core.round(s, {}));
        const auto b = protocol::to_json(core.round(s, {}));
        CHECK(a == b);
    }
    SECTION("skip-ahead fetch is rejected") {
        CHECK_THROWS_AS(core.round(s, 2), ApiError);
        try {
            core.round(s, 2);
        } catch (const ApiError& e) {
            CHECK(e.status == 409);
            CHECK(e.code == "round_conflict");
        }
        // the explicit current round is fine
        CHECK(core.round(s, 1).round == 1);
    }
    SECTION("responding advances and double submission conflicts") {
        const auto msg = core.round(s, {});
        CHECK(core.respond(s, all_answer(msg, 0)) == 1);
        CHECK(core.round(s, {}).round == 2);
        CHECK_THROWS_AS(core.respond(s, all_answer(msg, 0)), ApiError);
    }
    SECTION("wrong-round response conflicts") {
        auto resp = all_answer(core.round(s, {}), 0);
        resp.round = 3;
        CHECK_THROWS_AS(core.respond(s, resp), ApiError);
    }
}

TEST_CASE("responses must cover exactly the served users") {
    auto core_ptr = make_server(testsupport::separable_corpus(
        {.n_users = 3, .n_pos = 1, .posts_per_user = 2, .lexicon_size = 5, .words_per_post = 3}));
    auto& core = *core_ptr;
    const auto s = core.create_session("test").session_id;
    const auto msg = core.round(s, {});

    SECTION("a missing nick rejects the response and does not advance") {
        auto resp = all_answer(msg, 0);
        const std::string dropped = resp.predictions.begin()->first;
        resp.predictions.erase(resp.predictions.begin());
        resp.scores.clear();
        try {
            core.respond(s, resp);
            FAIL("expected ApiError");
        } catch (const ApiError& e) {
            CHECK(e.status == 400);
            CHECK(e.code == "missing_nicks");
            CHECK(e.detail.find(dropped) != std::string::npos);
        }
        CHECK(core.round(s, {}).round == 1);  // not advanced
    }
    SECTION("unknown nicks are rejected") {
        auto resp = all_answer(msg, 0);
        resp.predictions["ghost"] = 1;
        resp.scores.clear();
        CHECK_THROWS_AS(core.respond(s, resp), ApiError);
    }
    SECTION("prediction values outside {0,1} are rejected") {
        auto resp = all_answer(msg, 0);
        resp.predictions.begin()->second = 2;
        CHECK_THROWS_AS(core.respond(s, resp), ApiError);
    }
    SECTION("scores outside [0,1] are rejected") {
        auto resp = all_answer(msg, 0);
        resp.scores.begin()->second = 1.5;
        CHECK_THROWS_AS(core.respond(s, resp), ApiError);
    }
    SECTION("scores may be omitted entirely") {
        auto resp = all_answer(msg, 0);
        resp.scores.clear();
        CHECK(core.respond(s, resp) == 1);
    }
}

TEST_CASE("users drop out as their timelines exhaust") {
    auto corpus = testsupport::separable_corpus(
        {.n_users = 2, .n_pos = 1, .posts_per_user = 3, .lexicon_size = 5, .words_per_post = 3});
    corpus[0].posts.resize(1);  // first user has a single post
    const std::string survivor = corpus[1].nick;
    auto core_ptr = make_server(std::move(corpus));
    auto& core = *core_ptr;
    const auto s = core.create_session("test").session_id;

    auto msg = core.round(s, {});
    CHECK(msg.messages.size() == 2);
    core.respond(s, all_answer(msg, 0));
    msg = core.round(s, {});
    CHECK(msg.round == 2);
    REQUIRE(msg.messages.size() == 1);
    CHECK(msg.messages[0].nick == survivor);
}

TEST_CASE("decisions are sticky and the report closes the stream") {
    auto corpus = testsupport::separable_corpus(
        {.n_users = 2, .n_pos = 1, .posts_per_user = 9, .lexicon_size = 5, .words_per_post = 3});
    const std::string pos_nick = corpus[0].nick;
    auto core_ptr = make_server(std::move(corpus));
    auto& core = *core_ptr;
    const auto s = core.create_session("test").session_id;

    for (int round = 1; round <= 9; ++round) {
        const auto msg = core.round(s, {});
        auto resp = all_answer(msg, 0);
        // flag the positive user at round 7, then spuriously retract at 8+
        if (round == 7) resp.predictions[pos_nick] = 1;
        core.respond(s, resp);
    }
    const auto report = core.results(s);
    REQUIRE(report["labeled"].get<bool>());
    for (const auto& rec : report["records"]) {
        if (rec["nick"] == pos_nick) {
            CHECK(rec["decision"] == 1);
            CHECK(rec["latency"] == 7);
        } else {
            CHECK(rec["decision"] == 0);
            CHECK(rec["latency"] == 9);
        }
    }
}

TEST_CASE("results are refused until the session completes") {
    auto core_ptr = make_server(testsupport::separable_corpus(
        {.n_users = 2, .n_pos = 1, .posts_per_user = 2, .lexicon_size = 5, .words_per_post = 3}));
    auto& core = *core_ptr;
    const auto s = core.create_session("test").session_id;
    CHECK_THROWS_AS(core.results(s), ApiError);
    for (int round = 1; round <= 2; ++round) {
        core.respond(s, all_answer(core.round(s, {}), 0));
    }
    const auto report = core.results(s);
    CHECK(report["n_users"] == 2);
    CHECK(report["scores"]["accuracy"].get<double>() == 0.5);  // all-negative client

    // terminal marker after exhaustion
    const auto done = core.round(s, {});
    CHECK(done.done);
    CHECK(done.messages.empty());
    // answering after completion conflicts
    protocol::RoundResponse resp;
    resp.round = done.round;
    CHECK_THROWS_AS(core.respond(s, resp), ApiError);
}

TEST_CASE("unlabeled corpora produce decision-only reports") {
    auto corpus = testsupport::separable_corpus(
        {.n_users = 2, .n_pos = 1, .posts_per_user = 1, .lexicon_size = 5, .words_per_post = 3});
    for (auto& tl : corpus) tl.label.reset();
    auto core_ptr = make_server(std::move(corpus));
    auto& core = *core_ptr;
    const auto s = core.create_session("test").session_id;
    core.respond(s, all_answer(core.round(s, {}), 1));
    const auto report = core.results(s);
    CHECK_FALSE(report["labeled"].get<bool>());
    CHECK_FALSE(report.contains("scores"));
    REQUIRE(report["records"].size() == 2);
    CHECK(report["records"][0]["truth"].is_null());
    CHECK(report["records"][0]["decision"] == 1);
}

TEST_CASE("every served user appears in the final report exactly once") {
    const auto corpus = testsupport::separable_corpus(
        {.n_users = 7, .n_pos = 3, .posts_per_user = 4, .lexicon_size = 6, .words_per_post = 3});
    auto core_ptr = make_server(corpus);
    auto& core = *core_ptr;
    const auto s = core.create_session("test").session_id;
    for (;;) {
        const auto msg = core.round(s, {});
        if (msg.done) break;
        core.respond(s, all_answer(msg, msg.round % 2));
    }
    const auto report = core.results(s);
    std::set<std::string> seen;
    for (const auto& rec : report["records"]) seen.insert(rec["nick"].get<std::string>());
    CHECK(seen.size() == corpus.size());
}

TEST_CASE("http adapter speaks the documented wire protocol") {
    auto core_ptr = make_server(testsupport::separable_corpus(
        {.n_users = 2, .n_pos = 1, .posts_per_user = 2, .lexicon_size = 5, .words_per_post = 3}));
    auto& core = *core_ptr;
    server::HttpServer http(core);
    const int port = http.start_async();
    httplib::Client client("127.0.0.1", port);

    // create session
    auto res = client.Post("/sessions", R"({"corpus_id":"test"})", "application/json");
    REQUIRE(res);
    REQUIRE(res->status == 201);
    const auto created = json::parse(res->body);
    const std::string sid = created["session_id"].get<std::string>();
    CHECK(created["n_users"] == 2);

    // unknown corpus -> 404 with error envelope
    res = client.Post("/sessions", R"({"corpus_id":"nope"})", "application/json");
    REQUIRE(res);
    CHECK(res->status == 404);
    CHECK(json::parse(res->body)["error"] == "unknown_corpus");

    // fetch round 1, idempotent
    res = client.Get(("/sessions/" + sid + "/round").c_str());
    REQUIRE(res);
    REQUIRE(res->status == 200);
    const auto msg = protocol::round_message_from_json(json::parse(res->body));
    CHECK(msg.round == 1);
    CHECK(msg.messages.size() == 2);

    // skip-ahead via query parameter -> 409
    res = client.Get(("/sessions/" + sid + "/round?round=2").c_str());
    REQUIRE(res);
    CHECK(res->status == 409);

    // premature results -> 409
    res = client.Get(("/sessions/" + sid + "/results").c_str());
    REQUIRE(res);
    CHECK(res->status == 409);

    // respond both rounds
    for (int round = 1; round <= 2; ++round) {
        res = client.Get(("/sessions/" + sid + "/round").c_str());
        REQUIRE(res);
        const auto m = protocol::round_message_from_json(json::parse(res->body));
        res = client.Post(("/sessions/" + sid + "/responses").c_str(),
                          protocol::to_json(all_answer(m, 0)).dump(), "application/json");
        REQUIRE(res);
        REQUIRE(res->status == 200);
        CHECK(json::parse(res->body)["accepted_round"] == round);
    }

    // duplicate submission -> 409
    protocol::RoundResponse dup;
    dup.round = 2;
    res = client.Post(("/sessions/" + sid + "/responses").c_str(), protocol::to_json(dup).dump(),
                      "application/json");
    REQUIRE(res);
    CHECK(res->status == 409);

    // malformed JSON -> 400
    res = client.Post(("/sessions/" + sid + "/responses").c_str(), "{nope", "application/json");
    REQUIRE(res);
    CHECK(res->status == 400);

    // unknown session -> 404
    res = client.Get("/sessions/zzz/round");
    REQUIRE(res);
    CHECK(res->status == 404);

    // final results
    res = client.Get(("/sessions/" + sid + "/results").c_str());
    REQUIRE(res);
    REQUIRE(res->status == 200);
    CHECK(json::parse(res->body)["labeled"].get<bool>());

    http.stop();
}
