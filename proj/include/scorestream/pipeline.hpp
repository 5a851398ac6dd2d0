#pragma once

// Offline training run and online serving, joined only through the artifact
// directory:
//
//   <artifacts>/docvec.rrpv
//   <artifacts>/regressor.linear.rrml
//   <artifacts>/regressor.svr.rrml
//   <artifacts>/MANIFEST      JSON: file checksums, config hash, creation time
//
// Every file is replaced atomically and MANIFEST is written last, so a
// serving process sees either a complete old set or a complete new one.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scorestream/config.hpp"
#include "scorestream/stream.hpp"
#include "scorestream/tsdb_http.hpp"

namespace scorestream {

struct PhaseTimes {
    double vocabulary_ms = 0.0;
    double embedding_ms = 0.0;
    double scores_ms = 0.0;
    double regression_ms = 0.0;  ///< fitting every regressor
    double evaluation_ms = 0.0;
    double persist_ms = 0.0;

    nlohmann::json to_json() const;
};

struct OfflineRunReport {
    SkipCounters corpus;
    std::uint64_t labeled_documents = 0;
    std::size_t vocabulary_size = 0;
    std::vector<EpochStats> epochs;
    std::vector<EvaluationReport> evaluations;
    std::map<std::string, std::string> artifacts;  ///< path -> checksum
    std::string config_hash;
    PhaseTimes phases;

    nlohmann::json to_json() const;
};

std::filesystem::path docvec_artifact(const std::filesystem::path& dir);
std::filesystem::path regressor_artifact(const std::filesystem::path& dir, LossKind kind);
std::filesystem::path manifest_path(const std::filesystem::path& dir);

/// Trains, evaluates and persists both model kinds, then writes the report to
/// config.report_path. `progress` receives one line per epoch and phase.
/// Throws config_error for corpora with fewer than 10 admissible documents.
OfflineRunReport run_offline(const PipelineConfig& config, JsonLog* progress = nullptr);

/// Loads the document-vector model and one regressor, verifying each file
/// against MANIFEST. Missing files throw config_error naming the path; a
/// checksum mismatch or corrupt file throws integrity_error.
ModelSet load_artifacts(const std::filesystem::path& dir, LossKind regressor);

/// Re-scores every labeled document in `corpus_path` with the saved models
/// (vectors are inferred, not looked up) and reports R² per regressor.
nlohmann::json evaluate_saved_models(const PipelineConfig& config, const std::filesystem::path& corpus_path);

/// Everything the online side needs, owned in one place.
class OnlineService {
public:
    OnlineService(const PipelineConfig& config, JsonLog& log);
    ~OnlineService();

    StreamEngine& engine() { return *engine_; }
    Broker& broker() { return *broker_; }
    TimeSeriesStore& store() { return *store_; }
    /// Bound HTTP port, or -1 when the endpoint is disabled.
    int http_port() const { return http_port_; }

    StreamSummary run(const std::atomic<bool>* external_stop = nullptr) { return engine_->run(external_stop); }

private:
    std::unique_ptr<Broker> broker_;
    std::unique_ptr<TimeSeriesStore> store_;
    std::unique_ptr<StorePointWriter> writer_;
    std::unique_ptr<StreamEngine> engine_;
    std::unique_ptr<TsdbHttpServer> http_;
    int http_port_ = -1;
};

StreamSummary run_online(const PipelineConfig& config, const std::atomic<bool>* stop, JsonLog& log);

}  // namespace scorestream
