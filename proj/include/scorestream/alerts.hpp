#pragma once

// Threshold alerting over windowed aggregates of stored score points.

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "scorestream/tsdb.hpp"

namespace scorestream {

enum class Comparator { Less, Greater, LessEqual, GreaterEqual };
Comparator parse_comparator(std::string_view s);
std::string to_string(Comparator c);
bool compare(Comparator c, double observed, double threshold);

struct AlertRule {
    std::string name;
    std::string metric;
    std::int64_t window_ms = 60'000;
    Aggregator aggregator = Aggregator::Avg;
    Comparator comparator = Comparator::Less;
    double threshold = 0.0;
    std::int64_t cooldown_ms = 0;
    std::size_t min_points = 1;

    /// Throws config_error naming the rule.
    void validate() const;
    bool operator==(const AlertRule&) const = default;
};

nlohmann::json to_json(const AlertRule& rule);
AlertRule rule_from_json(const nlohmann::json& j);

struct AlertEvent {
    std::string rule;
    std::int64_t fired_at = 0;
    double value = 0.0;  ///< observed aggregate
    double threshold = 0.0;
    std::int64_t window_start = 0;
    std::int64_t window_end = 0;
    std::size_t points = 0;

    bool operator==(const AlertEvent&) const = default;
};

nlohmann::json to_json(const AlertEvent& event);

/// Last firing time per rule name.
struct AlertState {
    std::map<std::string, std::int64_t> last_fired;
    bool operator==(const AlertState&) const = default;
};

/// For each rule, aggregates points in [now - window_ms, now) and fires when
/// there are at least min_points, the comparison holds and the cooldown has
/// elapsed since the rule last fired. Fired rules are recorded in `state`.
std::vector<AlertEvent> evaluate_rules(std::span<const AlertRule> rules, const TimeSeriesStore& store,
                                       std::int64_t now, AlertState& state);

/// Evaluates at now = start + step, start + 2*step, ... <= end with a fresh state.
std::vector<AlertEvent> replay_rules(std::span<const AlertRule> rules, const TimeSeriesStore& store,
                                     std::int64_t start, std::int64_t end, std::int64_t step_ms);

struct DeliveryRecord {
    std::string sink;
    std::string rule;
    std::int64_t fired_at = 0;
    bool ok = false;
    int attempts = 0;
    std::string error;

    nlohmann::json to_json() const;
};

class AlertSink {
public:
    virtual ~AlertSink() = default;
    virtual std::string name() const = 0;
    /// Never throws; failures are reported in the record.
    virtual DeliveryRecord deliver(const AlertEvent& event) = 0;
};

/// Appends one JSON line per event.
class FileSink final : public AlertSink {
public:
    explicit FileSink(std::string path);
    std::string name() const override { return "file:" + path_; }
    DeliveryRecord deliver(const AlertEvent& event) override;

private:
    std::string path_;
    std::mutex mu_;
};

/// POSTs the event JSON to an http:// URL, retrying with exponential backoff.
class WebhookSink final : public AlertSink {
public:
    explicit WebhookSink(std::string url, int max_attempts = 3, int backoff_ms = 50, int timeout_ms = 1000);
    std::string name() const override { return "webhook:" + url_; }
    DeliveryRecord deliver(const AlertEvent& event) override;

private:
    std::string url_;
    std::string host_;
    std::string path_;
    int max_attempts_;
    int backoff_ms_;
    int timeout_ms_;
};

/// Delivers to every sink; one record per sink. Throws config_error when
/// `sinks` is empty.
std::vector<DeliveryRecord> emit_alert(const AlertEvent& event, std::span<const std::shared_ptr<AlertSink>> sinks);

}  // namespace scorestream
