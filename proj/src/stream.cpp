#include "scorestream/stream.hpp"

#include <algorithm>
#include <thread>

#include "scorestream/error.hpp"

namespace scorestream {

std::int64_t wall_clock_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
}

MicroBatch MicroBatch::from_messages(std::vector<Message> messages, std::int64_t drain_time_ms) {
    MicroBatch b;
    b.messages = std::move(messages);
    if (!b.messages.empty()) {
        b.batch_start = b.messages.front().offset;
        b.batch_end = b.messages.back().offset;
        for (std::size_t i = 1; i < b.messages.size(); ++i) {
            if (b.messages[i].offset != b.batch_start + i) throw integrity_error("micro-batch offsets are not contiguous");
        }
    }
    b.drain_time_ms = drain_time_ms;
    return b;
}

void JsonLog::write(const nlohmann::json& line) {
    if (!enabled()) return;
    std::lock_guard lock(mu_);
    if (fn_) fn_(line);
    if (out_) {
        *out_ << line.dump() << '\n';
        out_->flush();
    }
}

namespace {

void trace_stage(JsonLog* trace, const char* stage, std::uint64_t offset) {
    if (trace) trace->write({{"trace", stage}, {"offset", offset}});
}

std::optional<ScoredDocument> score_message(const Message& msg, const ParagraphVectorModel& docvec,
                                            const RegressionModel& regressor, const ScoringOptions& options) {
    const auto parsed = parse_record(msg.payload, options.mapping);
    if (!parsed.admitted()) return std::nullopt;

    const auto tokens = tokenize(parsed.record->text);
    trace_stage(options.trace, "tokenize", msg.offset);
    const auto vec = infer_vector(docvec, tokens);
    trace_stage(options.trace, "infer", msg.offset);
    ScoredDocument doc;
    doc.offset = msg.offset;
    doc.score = predict_score(regressor, std::span<const float>(vec.values),
                              options.clip ? std::optional(options.mapping.range) : std::nullopt);
    doc.degenerate_inference = vec.degenerate;
    doc.processed_at = wall_clock_ms();
    doc.id = parsed.record->id;
    trace_stage(options.trace, "predict", msg.offset);
    return doc;
}

}  // namespace

BatchScores infer_sentiment_batch(const MicroBatch& batch, const ParagraphVectorModel& docvec,
                                  const RegressionModel& regressor, const ScoringOptions& options) {
    const std::size_t n = batch.messages.size();
    std::vector<std::optional<ScoredDocument>> results(n);
    const std::size_t workers = std::clamp<std::size_t>(options.workers, 1, std::max<std::size_t>(n, 1));

    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) results[i] = score_message(batch.messages[i], docvec, regressor, options);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) {
                    results[i] = score_message(batch.messages[i], docvec, regressor, options);
                }
            });
        }
        for (auto& t : pool) t.join();
    }

    BatchScores out;
    out.scored.reserve(n);
    for (auto& r : results) {
        if (r) {
            out.scored.push_back(std::move(*r));
        } else {
            ++out.skipped;
        }
    }
    return out;
}

nlohmann::json StreamSummary::to_json() const {
    return {{"batches", batches}, {"documents", documents}, {"skipped", skipped},      {"points", points},
            {"alerts", alerts},   {"reloads", reloads},     {"next_offset", next_offset}};
}

StreamEngine::StreamEngine(Broker& broker, PointWriter& writer, ModelSet models, StreamOptions options, JsonLog& log)
    : broker_(broker), writer_(writer), models_(std::move(models)), options_(std::move(options)), log_(log) {
    if (!models_.docvec || !models_.regressor) throw config_error("stream engine needs both models loaded");
    if (models_.regressor->dim() != models_.docvec->params.dim) {
        throw config_error("regressor dimension " + std::to_string(models_.regressor->dim()) +
                           " does not match document vector dimension " + std::to_string(models_.docvec->params.dim));
    }
    if (options_.batch_max < 1) throw config_error("batch_max must be >= 1");
    if (options_.trace) options_.scoring.trace = &log_;
    summary_.next_offset = broker_.committed_offset(options_.consumer, options_.topic);
}

void StreamEngine::set_alerting(const TimeSeriesStore* store, std::vector<AlertRule> rules,
                                std::vector<std::shared_ptr<AlertSink>> sinks) {
    for (const auto& r : rules) r.validate();
    if (!rules.empty() && sinks.empty()) throw config_error("alert rules are configured but no sink is");
    alert_store_ = store;
    rules_ = std::move(rules);
    sinks_ = std::move(sinks);
    std::int64_t shortest = 0;
    for (const auto& r : rules_) shortest = shortest == 0 ? r.window_ms : std::min(shortest, r.window_ms);
    alert_tick_ = std::chrono::milliseconds(std::max<std::int64_t>(1, shortest / 4));
    last_alert_eval_ = std::chrono::steady_clock::now();
}

void StreamEngine::request_stop() {
    stop_ = true;
    broker_.notify_all();
}

bool StreamEngine::stop_requested(const std::atomic<bool>* external_stop) const {
    if (stop_ || (external_stop && external_stop->load())) return true;
    std::error_code ec;
    return !options_.stop_file.empty() && std::filesystem::exists(options_.stop_file, ec);
}

void StreamEngine::maybe_reload() {
    std::error_code ec;
    if (!options_.reload_file.empty() && std::filesystem::exists(options_.reload_file, ec)) {
        std::filesystem::remove(options_.reload_file, ec);
        reload_requested_ = true;
    }
    if (!reload_requested_.exchange(false) || !reloader_) return;

    std::optional<ModelSet> fresh;
    try {
        fresh = reloader_();
    } catch (const std::exception& e) {
        log_.write({{"event", "reload_failed"}, {"error", e.what()}, {"model", models_.checksum}});
        return;
    }
    if (!fresh || fresh->checksum == models_.checksum) {
        log_.write({{"event", "reload_skipped"}, {"model", models_.checksum}});
        return;
    }
    models_ = std::move(*fresh);
    ++summary_.reloads;
    log_.write({{"event", "reload"}, {"model", models_.checksum}});
}

void StreamEngine::write_with_retry(const std::vector<TimeSeriesPoint>& points) {
    auto backoff = options_.write_backoff;
    for (int attempt = 1;; ++attempt) {
        try {
            writer_.write(points);
            return;
        } catch (const std::exception& e) {
            log_.write({{"event", "write_retry"}, {"attempt", attempt}, {"error", e.what()}});
            const bool exhausted = options_.max_write_attempts > 0 && attempt >= options_.max_write_attempts;
            if (exhausted || stop_) {
                throw runtime_error(std::string("points not durable, batch left uncommitted: ") + e.what());
            }
        }
        std::this_thread::sleep_for(backoff);
        backoff = std::min(backoff * 2, options_.write_backoff_max);
    }
}

void StreamEngine::evaluate_alerts(std::int64_t now_ms) {
    last_alert_eval_ = std::chrono::steady_clock::now();
    if (!alert_store_ || rules_.empty()) return;
    for (const auto& event : evaluate_rules(rules_, *alert_store_, now_ms, alert_state_)) {
        ++summary_.alerts;
        nlohmann::json deliveries = nlohmann::json::array();
        for (const auto& rec : emit_alert(event, sinks_)) deliveries.push_back(rec.to_json());
        log_.write({{"event", "alert"}, {"alert", to_json(event)}, {"deliveries", deliveries}});
    }
}

std::size_t StreamEngine::step() {
    maybe_reload();
    const auto t0 = std::chrono::steady_clock::now();
    auto messages = broker_.fetch_batch(options_.consumer, options_.topic, options_.batch_max, options_.batch_wait);
    if (messages.empty()) return 0;
    const auto drained = std::chrono::steady_clock::now();
    const auto batch = MicroBatch::from_messages(
        std::move(messages), std::chrono::duration_cast<std::chrono::milliseconds>(drained - t0).count());

    // hold the pair for the whole batch; a reload only lands between batches
    const ModelSet models = models_;
    const auto scores = infer_sentiment_batch(batch, *models.docvec, *models.regressor, options_.scoring);

    std::vector<TimeSeriesPoint> points;
    points.reserve(scores.scored.size());
    for (const auto& doc : scores.scored) {
        TimeSeriesPoint p;
        p.metric = options_.metric;
        p.timestamp = doc.processed_at;
        p.value = doc.score;
        p.tags["offset"] = std::to_string(doc.offset);
        if (doc.degenerate_inference) p.tags["degenerate"] = "true";
        if (options_.trace) trace_stage(&log_, "payload", doc.offset);
        points.push_back(std::move(p));
    }
    if (!points.empty()) write_with_retry(points);
    if (options_.trace) {
        for (const auto& doc : scores.scored) trace_stage(&log_, "post", doc.offset);
    }

    if (after_write_) after_write_(batch);
    broker_.commit_offset(options_.consumer, options_.topic, batch.batch_end + 1);

    const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0);
    ++summary_.batches;
    summary_.documents += batch.size();
    summary_.skipped += scores.skipped;
    summary_.points += points.size();
    summary_.next_offset = batch.batch_end + 1;
    log_.write({{"event", "batch"},
                {"batch_start", batch.batch_start},
                {"batch_end", batch.batch_end},
                {"size", batch.size()},
                {"skipped", scores.skipped},
                {"elapsed_ms", elapsed.count()},
                {"drain_ms", batch.drain_time_ms},
                {"model", models.checksum}});

    evaluate_alerts(wall_clock_ms());
    return batch.size();
}

StreamSummary StreamEngine::run(const std::atomic<bool>* external_stop) {
    while (!stop_requested(external_stop)) {
        step();
        if (!rules_.empty() && std::chrono::steady_clock::now() - last_alert_eval_ >= alert_tick_) {
            evaluate_alerts(wall_clock_ms());
        }
    }
    log_.write({{"event", "stopped"}, {"summary", summary_.to_json()}});
    return summary_;
}

}  // namespace scorestream
