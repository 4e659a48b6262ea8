#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <functional>
#include <string>

#include "gfpo/config.hpp"

namespace {

std::string message_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const gfpo::ConfigError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("canonical text parses back to the same canonical text") {
    SECTION("defaults") {
        const gfpo::RunConfig cfg = gfpo::default_run_config();
        const std::string text = gfpo::canonical_config(cfg);
        const gfpo::RunConfig parsed = gfpo::parse_config_text(text, "canon");
        REQUIRE(gfpo::canonical_config(parsed) == text);
    }
    SECTION("non-default values survive the round trip") {
        gfpo::RunConfig cfg;
        cfg.train.mode = gfpo::TrainMode::gfpo_adaptive;
        cfg.train.group_size = 24;
        cfg.train.retain_k = 6;
        cfg.train.learning_rate = 0.125;
        cfg.train.metric = gfpo::MetricKind::token_efficiency;
        cfg.train.order = gfpo::SortOrder::descending;
        cfg.train.aggregation = gfpo::Aggregation::per_response;
        cfg.reward.min_scale = 0.625;
        cfg.env.max_len = 32;

        const std::string text = gfpo::canonical_config(cfg);
        const gfpo::RunConfig parsed = gfpo::parse_config_text(text, "canon");
        REQUIRE(gfpo::canonical_config(parsed) == text);
        REQUIRE(parsed.train.group_size == 24);
        REQUIRE(parsed.train.metric == gfpo::MetricKind::token_efficiency);
        REQUIRE(parsed.train.order == gfpo::SortOrder::descending);
    }
}

TEST_CASE("config hashes separate distinct configs and match equal ones") {
    const gfpo::RunConfig a = gfpo::default_run_config();
    gfpo::RunConfig b = a;
    REQUIRE(gfpo::config_hash_hex(a) == gfpo::config_hash_hex(b));
    REQUIRE(gfpo::config_hash_hex(a).size() == 16);

    b.train.seed = 2;
    REQUIRE(gfpo::config_hash_hex(a) != gfpo::config_hash_hex(b));
}

TEST_CASE("parser accepts comments, blank lines and loose whitespace") {
    const std::string text =
        "# leading comment\n"
        "\n"
        "[trainer]\n"
        "; another comment style\n"
        "  steps   =  42  \n"
        "seed=9\n"
        "[selection]\n"
        "retain_k = 4\n";
    const auto cfg = gfpo::parse_config_text(text, "inline");
    REQUIRE(cfg.train.steps == 42);
    REQUIRE(cfg.train.seed == 9);
    REQUIRE(cfg.train.retain_k == 4);
}

TEST_CASE("selecting a metric also pins its sort order") {
    const auto eff = gfpo::parse_config_text("[selection]\nmetric = token_efficiency\n", "inline");
    REQUIRE(eff.train.metric == gfpo::MetricKind::token_efficiency);
    REQUIRE(eff.train.order == gfpo::SortOrder::descending);

    const auto len = gfpo::parse_config_text("[selection]\nmetric = length\n", "inline");
    REQUIRE(len.train.metric == gfpo::MetricKind::length);
    REQUIRE(len.train.order == gfpo::SortOrder::ascending);
}

TEST_CASE("parse errors carry the origin and line number") {
    SECTION("unknown section") {
        const auto msg = message_of([] { gfpo::parse_config_text("[nope]\n", "cfg.ini"); });
        REQUIRE(msg.find("cfg.ini:1") != std::string::npos);
        REQUIRE(msg.find("nope") != std::string::npos);
    }
    SECTION("unknown key names the full path") {
        const auto msg =
            message_of([] { gfpo::parse_config_text("[trainer]\nbogus = 1\n", "cfg.ini"); });
        REQUIRE(msg.find("cfg.ini:2") != std::string::npos);
        REQUIRE(msg.find("trainer.bogus") != std::string::npos);
    }
    SECTION("duplicate key") {
        const auto msg = message_of(
            [] { gfpo::parse_config_text("[trainer]\nsteps = 1\nsteps = 2\n", "cfg.ini"); });
        REQUIRE(msg.find("cfg.ini:3") != std::string::npos);
        REQUIRE(msg.find("duplicate") != std::string::npos);
    }
    SECTION("key before any section") {
        const auto msg = message_of([] { gfpo::parse_config_text("steps = 1\n", "cfg.ini"); });
        REQUIRE(msg.find("cfg.ini:1") != std::string::npos);
    }
    SECTION("malformed section header") {
        REQUIRE_THROWS_AS(gfpo::parse_config_text("[trainer\n", "cfg.ini"), gfpo::ConfigError);
    }
    SECTION("line without an equals sign") {
        REQUIRE_THROWS_AS(gfpo::parse_config_text("[trainer]\nsteps\n", "cfg.ini"), gfpo::ConfigError);
    }
    SECTION("non-numeric value reports the key path") {
        const auto msg =
            message_of([] { gfpo::parse_config_text("[trainer]\nsteps = soon\n", "cfg.ini"); });
        REQUIRE(msg.find("trainer.steps") != std::string::npos);
        REQUIRE(msg.find("soon") != std::string::npos);
    }
    SECTION("bad enum value lists the options") {
        const auto msg =
            message_of([] { gfpo::parse_config_text("[trainer]\nmode = sgd\n", "cfg.ini"); });
        REQUIRE(msg.find("grpo") != std::string::npos);
        REQUIRE(msg.find("sgd") != std::string::npos);
    }
}

TEST_CASE("overrides support qualified keys, bare keys and shorthands") {
    gfpo::RunConfig cfg;

    gfpo::apply_override(cfg, "G=24");
    REQUIRE(cfg.train.group_size == 24);

    gfpo::apply_override(cfg, "k=5");
    REQUIRE(cfg.train.retain_k == 5);

    gfpo::apply_override(cfg, "trainer.seed=9");
    REQUIRE(cfg.train.seed == 9);

    gfpo::apply_override(cfg, "beta=0.01");  // unique across sections
    REQUIRE(cfg.train.beta == 0.01);

    gfpo::apply_override(cfg, "compression=50");
    REQUIRE(cfg.adaptive.compression == 50.0);

    gfpo::apply_override(cfg, " metric = token_efficiency ");
    REQUIRE(cfg.train.metric == gfpo::MetricKind::token_efficiency);

    SECTION("malformed or unknown overrides throw") {
        REQUIRE_THROWS_AS(gfpo::apply_override(cfg, "no_equals"), gfpo::ConfigError);
        REQUIRE_THROWS_AS(gfpo::apply_override(cfg, "nope=1"), gfpo::ConfigError);
        REQUIRE_THROWS_AS(gfpo::apply_override(cfg, "trainer.nope=1"), gfpo::ConfigError);
        REQUIRE_THROWS_AS(gfpo::apply_override(cfg, "wat.steps=1"), gfpo::ConfigError);
    }
    SECTION("unknown override names the key") {
        const auto msg = message_of([&] { gfpo::apply_override(cfg, "bogus=3"); });
        REQUIRE(msg.find("bogus") != std::string::npos);
    }
}

TEST_CASE("finalize copies the environment length budget into the trainer") {
    gfpo::RunConfig cfg;
    cfg.env.max_len = 32;
    cfg.train.max_len = 7;  // stale; finalize must overwrite it
    gfpo::finalize_run_config(cfg);
    REQUIRE(cfg.train.max_len == 32);
}

TEST_CASE("finalize validates by mode") {
    SECTION("bad epsilon fails in any mode") {
        gfpo::RunConfig cfg;
        cfg.train.epsilon = 1.5;
        REQUIRE_THROWS_AS(gfpo::finalize_run_config(cfg), gfpo::InvariantViolation);
    }
    SECTION("adaptive bucket sizes are only checked in adaptive mode") {
        gfpo::RunConfig cfg;
        cfg.train.group_size = 6;
        cfg.train.retain_k = 3;
        cfg.adaptive.k_hard = 8;  // exceeds the group size
        REQUIRE_NOTHROW(gfpo::finalize_run_config(cfg));

        cfg.train.mode = gfpo::TrainMode::gfpo_adaptive;
        REQUIRE_THROWS_AS(gfpo::finalize_run_config(cfg), gfpo::ConfigError);
    }
    SECTION("inconsistent env bounds fail") {
        gfpo::RunConfig cfg;
        cfg.env.w_star_min = 10;
        cfg.env.w_star_max = 3;
        REQUIRE_THROWS_AS(gfpo::finalize_run_config(cfg), gfpo::ConfigError);
    }
}

TEST_CASE("config files parse from disk and missing files fail cleanly") {
    const std::string path = "test_config_roundtrip.ini";
    {
        std::ofstream out(path);
        out << gfpo::canonical_config(gfpo::default_run_config());
    }
    const auto cfg = gfpo::parse_config_file(path);
    REQUIRE(gfpo::canonical_config(cfg) == gfpo::canonical_config(gfpo::default_run_config()));
    std::remove(path.c_str());

    REQUIRE_THROWS_AS(gfpo::parse_config_file("does_not_exist.ini"), gfpo::ConfigError);
}

TEST_CASE("name helpers cover every enum value") {
    REQUIRE(std::string(gfpo::mode_name(gfpo::TrainMode::grpo)) == "grpo");
    REQUIRE(std::string(gfpo::mode_name(gfpo::TrainMode::gfpo_fixed)) == "gfpo_fixed");
    REQUIRE(std::string(gfpo::mode_name(gfpo::TrainMode::gfpo_adaptive)) == "gfpo_adaptive");
    REQUIRE(std::string(gfpo::metric_name(gfpo::MetricKind::length)) == "length");
    REQUIRE(std::string(gfpo::metric_name(gfpo::MetricKind::token_efficiency)) == "token_efficiency");
    REQUIRE(std::string(gfpo::aggregation_name(gfpo::Aggregation::token_level)) == "token_level");
    REQUIRE(std::string(gfpo::aggregation_name(gfpo::Aggregation::per_response)) == "per_response");
}
