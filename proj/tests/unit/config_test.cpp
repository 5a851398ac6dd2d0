#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "scorestream/config.hpp"
#include "scorestream/error.hpp"
#include "test_support.hpp"

using namespace scorestream;
using scorestream::testing::TempDir;
using scorestream::testing::write_text;

namespace {

std::string config_error_message(const std::filesystem::path& path) {
    try {
        load_config(path);
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Config);
        return e.what();
    }
    ADD_FAILURE() << "config loaded";
    return {};
}

}  // namespace

TEST(Config, MinimalConfigGetsDefaults) {
    TempDir dir;
    write_text(dir / "c.json", R"({"corpus": {"path": "reviews.jsonl"}})");
    const auto c = load_config(dir / "c.json");
    EXPECT_EQ(c.corpus.path, dir / "reviews.jsonl");
    EXPECT_EQ(c.seed, 1u);
    EXPECT_EQ(c.embedding.dim, 100u);
    EXPECT_EQ(c.embedding.window, 5u);
    EXPECT_EQ(c.embedding.epochs, 10u);
    EXPECT_DOUBLE_EQ(c.embedding.alpha_start, 0.025);
    EXPECT_DOUBLE_EQ(c.embedding.alpha_end, 0.0001);
    EXPECT_EQ(c.embedding.min_count, 2u);
    EXPECT_EQ(c.embedding.infer_steps, 50u);
    EXPECT_EQ(c.embedding.subsample_t, 0.0);
    EXPECT_EQ(c.corpus.mapping.text_field, "reviewText");
    EXPECT_EQ(c.corpus.mapping.score_field, "overall");
    EXPECT_DOUBLE_EQ(c.score_range.min, 1.0);
    EXPECT_DOUBLE_EQ(c.score_range.max, 5.0);
    EXPECT_EQ(c.regression.kinds.size(), 2u);
    EXPECT_DOUBLE_EQ(c.regression.test_fraction, 0.2);
    EXPECT_EQ(c.artifacts_dir, dir / "models");
    EXPECT_EQ(c.report_path, dir / "report.json");
    EXPECT_EQ(c.broker.data_dir, dir / "broker");
    EXPECT_EQ(c.tsdb.dir, dir / "tsdb");
    EXPECT_EQ(c.stream.batch_max, 128u);
    EXPECT_EQ(c.stream.batch_wait_ms, 500);
    EXPECT_EQ(c.tsdb.http_port, -1);
    EXPECT_TRUE(c.alerts.rules.empty());
}

TEST(Config, UnknownKeyIsNamed) {
    TempDir dir;
    write_text(dir / "c.json", R"({"corpus": {"path": "x"}, "embedding": {"epochz": 3}})");
    const auto msg = config_error_message(dir / "c.json");
    EXPECT_NE(msg.find("embedding.epochz"), std::string::npos) << msg;
    EXPECT_NE(msg.find("c.json"), std::string::npos) << msg;
}

TEST(Config, MissingAndMistypedKeys) {
    TempDir dir;
    write_text(dir / "a.json", R"({"embedding": {"dim": 8}})");
    EXPECT_NE(config_error_message(dir / "a.json").find("corpus.path"), std::string::npos);
    write_text(dir / "b.json", R"({"corpus": {"path": "x"}, "embedding": {"dim": "big"}})");
    EXPECT_NE(config_error_message(dir / "b.json").find("embedding.dim"), std::string::npos);
    write_text(dir / "c.json", R"({"corpus": {"path": "x"}, "embedding": {"epochs": 0}})");
    config_error_message(dir / "c.json");
    write_text(dir / "d.json", R"({"corpus": {"path": "x"},)");
    config_error_message(dir / "d.json");
    config_error_message(dir / "missing.json");
}

TEST(Config, RoundTripThroughSerialization) {
    TempDir dir;
    write_text(dir / "c.json", R"({
        // comments are allowed
        "seed": 9,
        "corpus": {"path": "data/r.jsonl", "text_field": "body"},
        "embedding": {"dim": 32, "subsample_t": 1e-4},
        "regression": {"kinds": ["svr"], "epsilon": 0.2},
        "stream": {"batch_max": 16, "regressor": "svr", "stop_file": "STOP"},
        "tsdb": {"http_port": 0},
        /* block comment */
        "alerts": {"rules": [{"name": "low", "threshold": 2.5, "cooldown_ms": 1000}],
                   "sinks": {"file": "alerts.jsonl"}}
    })");
    const auto a = load_config(dir / "c.json");
    EXPECT_EQ(a.seed, 9u);
    EXPECT_EQ(a.embedding.seed, 9u);
    EXPECT_EQ(a.corpus.mapping.text_field, "body");
    EXPECT_EQ(a.stream.stop_file, dir / "STOP");
    ASSERT_EQ(a.alerts.rules.size(), 1u);

    write_text(dir / "sub" / "again.json", to_json(a).dump(2));
    const auto b = load_config(dir / "sub" / "again.json");
    EXPECT_TRUE(a == b);
    EXPECT_EQ(to_json(a), to_json(b));
    EXPECT_EQ(config_hash(a), config_hash(b));
}

TEST(Config, HashTracksModelSettingsOnly) {
    TempDir dir;
    write_text(dir / "c.json", R"({"corpus": {"path": "x"}})");
    const auto a = load_config(dir / "c.json");
    auto b = a;
    b.stream.batch_max = 3;
    b.tsdb.metric = "other";
    EXPECT_EQ(config_hash(a), config_hash(b));
    b.embedding.dim = 7;
    EXPECT_NE(config_hash(a), config_hash(b));
}
