#pragma once

// Online scoring loop: fetch a micro-batch from the broker, score each
// document, write one point per document, then commit past the batch.
//
// The commit happens only after the batch's points are durable, so a crash
// anywhere in between replays the batch (at-least-once into the store).

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scorestream/alerts.hpp"
#include "scorestream/broker.hpp"
#include "scorestream/corpus.hpp"
#include "scorestream/embedding.hpp"
#include "scorestream/regression.hpp"
#include "scorestream/tsdb.hpp"

namespace scorestream {

struct MicroBatch {
    std::vector<Message> messages;
    std::uint64_t batch_start = 0;
    std::uint64_t batch_end = 0;  ///< offset of the last message (inclusive)
    std::int64_t drain_time_ms = 0;

    std::size_t size() const { return messages.size(); }
    static MicroBatch from_messages(std::vector<Message> messages, std::int64_t drain_time_ms);
};

struct ScoredDocument {
    std::uint64_t offset = 0;
    double score = 0.0;
    bool degenerate_inference = false;
    std::int64_t processed_at = 0;
    std::optional<std::string> id;
};

/// Thread-safe sink for JSON log lines.
class JsonLog {
public:
    JsonLog() = default;  ///< discards everything
    explicit JsonLog(std::ostream& out) : out_(&out) {}
    explicit JsonLog(std::function<void(const nlohmann::json&)> fn) : fn_(std::move(fn)) {}

    bool enabled() const { return out_ != nullptr || static_cast<bool>(fn_); }
    void write(const nlohmann::json& line);

private:
    std::ostream* out_ = nullptr;
    std::function<void(const nlohmann::json&)> fn_;
    std::mutex mu_;
};

struct ScoringOptions {
    FieldMapping mapping;
    bool clip = true;
    std::size_t workers = 1;
    JsonLog* trace = nullptr;  ///< per-message stage lines when set
};

struct BatchScores {
    std::vector<ScoredDocument> scored;  ///< in input order
    std::size_t skipped = 0;
};

/// parse, tokenize, infer and predict for each message. Unparseable messages
/// are counted as skipped. Models are only read.
BatchScores infer_sentiment_batch(const MicroBatch& batch, const ParagraphVectorModel& docvec,
                                  const RegressionModel& regressor, const ScoringOptions& options);

/// Loaded model pair plus the identity reported in batch logs.
struct ModelSet {
    std::shared_ptr<const ParagraphVectorModel> docvec;
    std::shared_ptr<const RegressionModel> regressor;
    std::string checksum;
};

/// Destination for scored points. write() must throw when the points are not
/// durable.
class PointWriter {
public:
    virtual ~PointWriter() = default;
    virtual void write(std::span<const TimeSeriesPoint> points) = 0;
};

class StorePointWriter final : public PointWriter {
public:
    explicit StorePointWriter(TimeSeriesStore& store) : store_(store) {}
    void write(std::span<const TimeSeriesPoint> points) override { store_.write_points(points); }

private:
    TimeSeriesStore& store_;
};

struct StreamOptions {
    std::string topic = "reviews";
    std::string consumer = "scorer";
    std::string metric = "sentiment.score";
    std::size_t batch_max = 128;
    std::chrono::milliseconds batch_wait{500};
    ScoringOptions scoring;
    std::filesystem::path stop_file;    ///< stop when this file appears (empty: disabled)
    std::filesystem::path reload_file;  ///< reload models when this file appears; it is removed
    std::chrono::milliseconds write_backoff{50};
    std::chrono::milliseconds write_backoff_max{2000};
    int max_write_attempts = 0;  ///< 0 retries until stopped
    bool trace = false;
};

struct StreamSummary {
    std::uint64_t batches = 0;
    std::uint64_t documents = 0;
    std::uint64_t skipped = 0;
    std::uint64_t points = 0;
    std::uint64_t alerts = 0;
    std::uint64_t reloads = 0;
    std::uint64_t next_offset = 0;

    nlohmann::json to_json() const;
};

class StreamEngine {
public:
    using Reloader = std::function<std::optional<ModelSet>()>;
    using BatchHook = std::function<void(const MicroBatch&)>;

    StreamEngine(Broker& broker, PointWriter& writer, ModelSet models, StreamOptions options, JsonLog& log);

    /// Called on a reload request between batches; returning nullopt keeps
    /// the current models.
    void set_reloader(Reloader reloader) { reloader_ = std::move(reloader); }
    /// Runs after a batch's points are written and before its commit.
    void set_after_write_hook(BatchHook hook) { after_write_ = std::move(hook); }
    /// Enables alert evaluation against `store` after every commit and on a
    /// tick of a quarter of the shortest rule window.
    void set_alerting(const TimeSeriesStore* store, std::vector<AlertRule> rules,
                      std::vector<std::shared_ptr<AlertSink>> sinks);

    /// Fetches and fully processes at most one batch. Returns its size.
    std::size_t step();

    /// Loops until request_stop(), `*external_stop`, or the stop file.
    StreamSummary run(const std::atomic<bool>* external_stop = nullptr);

    void request_stop();
    void request_reload() { reload_requested_ = true; }

    const StreamSummary& summary() const { return summary_; }
    const ModelSet& models() const { return models_; }
    const AlertState& alert_state() const { return alert_state_; }

private:
    bool stop_requested(const std::atomic<bool>* external_stop) const;
    void maybe_reload();
    void write_with_retry(const std::vector<TimeSeriesPoint>& points);
    void evaluate_alerts(std::int64_t now_ms);

    Broker& broker_;
    PointWriter& writer_;
    ModelSet models_;
    StreamOptions options_;
    JsonLog& log_;
    Reloader reloader_;
    BatchHook after_write_;

    const TimeSeriesStore* alert_store_ = nullptr;
    std::vector<AlertRule> rules_;
    std::vector<std::shared_ptr<AlertSink>> sinks_;
    AlertState alert_state_;
    std::chrono::milliseconds alert_tick_{0};
    std::chrono::steady_clock::time_point last_alert_eval_{};

    std::atomic<bool> stop_{false};
    std::atomic<bool> reload_requested_{false};
    StreamSummary summary_;
};

std::int64_t wall_clock_ms();

}  // namespace scorestream
