#include <catch2/catch_amalgamated.hpp>

#include "erd/config.hpp"
#include "erd/runner.hpp"

using namespace erd;

TEST_CASE("config parses sections, comments, and values") {
    const auto cfg = Config::parse(
        "# comment\n"
        "[model]\n"
        "kind = ss3\n"
        "path= model.json \n"
        "\n"
        "[policy]\n"
        "kind = global\n"
        "gamma = 0.5\n"
        "; another comment\n"
        "[run]\n"
        "seed = 42\n");
    CHECK(cfg.get("model", "kind") == "ss3");
    CHECK(cfg.get("model", "path") == "model.json");
    CHECK(cfg.get_double("policy", "gamma", 0.0) == 0.5);
    CHECK(cfg.get_int("run", "seed", 0) == 42);
    CHECK_FALSE(cfg.get("run", "missing").has_value());
    CHECK(cfg.get_or("run", "missing", "fallback") == "fallback");
}

TEST_CASE("config error paths") {
    CHECK_THROWS_AS(Config::parse("[broken\n"), ParseError);
    CHECK_THROWS_AS(Config::parse("no equals sign\n"), ParseError);
    CHECK_THROWS_AS(Config::parse("= value\n"), ParseError);
    const auto cfg = Config::parse("[a]\nx = hello\n");
    CHECK_THROWS_AS(cfg.get_double("a", "x", 0.0), ParseError);
}

TEST_CASE("pipeline config reads the documented keys") {
    const auto cfg = Config::parse(
        "[model]\n"
        "kind = replay\n"
        "scores = scores.csv\n"
        "[policy]\n"
        "kind = history\n"
        "tau = 0.7\n"
        "T = 10\n"
        "[server]\n"
        "url = http://localhost:9000\n"
        "[run]\n"
        "out = myrun\n"
        "seed = 7\n"
        "window_n = 4\n");
    const auto pc = runner::pipeline_config_from(cfg);
    CHECK(pc.model == runner::ModelKind::replay);
    CHECK(pc.score_file == "scores.csv");
    CHECK(pc.policy == runner::PolicyKind::history);
    CHECK(pc.history_cfg.tau == 0.7);
    CHECK(pc.history_cfg.required_count == 10);
    CHECK(pc.server_url == "http://localhost:9000");
    CHECK(pc.output_dir == "myrun");
    CHECK(pc.seed == 7);
    CHECK(pc.window_n == 4);

    CHECK_THROWS_AS(runner::model_kind_from("bert"), ValidationError);
    CHECK_THROWS_AS(runner::policy_kind_from("none"), ValidationError);
}
