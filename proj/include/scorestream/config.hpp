#pragma once

// Pipeline configuration: a JSON document (// and /* */ comments allowed).
// Every key is optional except corpus.path; unknown keys are rejected.
// Relative paths are resolved against the directory holding the file.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scorestream/alerts.hpp"
#include "scorestream/corpus.hpp"
#include "scorestream/embedding.hpp"
#include "scorestream/regression.hpp"

namespace scorestream {

struct CorpusConfig {
    std::filesystem::path path;
    FieldMapping mapping;  ///< range mirrors PipelineConfig::score_range
    bool operator==(const CorpusConfig&) const = default;
};

struct RegressionConfig {
    std::vector<LossKind> kinds{LossKind::Squared, LossKind::EpsilonInsensitive};
    RegressionParams params;  ///< loss and seed are filled per run
    double test_fraction = 0.2;
    bool operator==(const RegressionConfig&) const = default;
};

struct BrokerConfig {
    std::filesystem::path data_dir;
    std::string topic = "reviews";
    std::string consumer = "scorer";
    bool sync_writes = true;
    bool operator==(const BrokerConfig&) const = default;
};

struct StreamConfig {
    std::size_t batch_max = 128;
    std::int64_t batch_wait_ms = 500;
    bool clip = true;
    std::size_t workers = 1;
    LossKind regressor = LossKind::Squared;
    std::filesystem::path stop_file;
    std::filesystem::path reload_file;
    bool trace = false;
    bool operator==(const StreamConfig&) const = default;
};

struct TsdbConfig {
    std::filesystem::path dir;
    std::string metric = "sentiment.score";
    int http_port = -1;  ///< -1 disables the HTTP endpoint, 0 picks a free port
    bool sync_writes = true;
    bool operator==(const TsdbConfig&) const = default;
};

struct AlertsConfig {
    std::vector<AlertRule> rules;
    std::filesystem::path file_sink;
    std::string webhook_url;
    int webhook_attempts = 3;
    bool operator==(const AlertsConfig&) const = default;
};

struct PipelineConfig {
    std::uint64_t seed = 1;
    ScoreRange score_range;
    CorpusConfig corpus;
    EmbeddingParams embedding;  ///< seed mirrors PipelineConfig::seed
    RegressionConfig regression;
    std::filesystem::path artifacts_dir;
    std::filesystem::path report_path;
    BrokerConfig broker;
    StreamConfig stream;
    TsdbConfig tsdb;
    AlertsConfig alerts;

    bool operator==(const PipelineConfig&) const = default;
};

/// Builds a config from parsed JSON. `base_dir` anchors relative paths and
/// `source` names the origin in error messages.
PipelineConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir,
                                const std::string& source = "config");

/// Throws config_error naming the key and the file on any problem.
PipelineConfig load_config(const std::filesystem::path& path);

/// Full serialization with every default spelled out and absolute paths.
nlohmann::json to_json(const PipelineConfig& config);

/// Stable hash of the serialized config, used to tag artifacts.
std::string config_hash(const PipelineConfig& config);

}  // namespace scorestream
