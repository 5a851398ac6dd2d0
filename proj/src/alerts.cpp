#include "scorestream/alerts.hpp"

#include <chrono>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "scorestream/error.hpp"

namespace scorestream {

Comparator parse_comparator(std::string_view s) {
    if (s == "<") return Comparator::Less;
    if (s == ">") return Comparator::Greater;
    if (s == "<=") return Comparator::LessEqual;
    if (s == ">=") return Comparator::GreaterEqual;
    throw config_error("unknown comparator '" + std::string(s) + "' (expected <, >, <= or >=)");
}

std::string to_string(Comparator c) {
    switch (c) {
    case Comparator::Less: return "<";
    case Comparator::Greater: return ">";
    case Comparator::LessEqual: return "<=";
    case Comparator::GreaterEqual: return ">=";
    }
    return "<";
}

bool compare(Comparator c, double observed, double threshold) {
    switch (c) {
    case Comparator::Less: return observed < threshold;
    case Comparator::Greater: return observed > threshold;
    case Comparator::LessEqual: return observed <= threshold;
    case Comparator::GreaterEqual: return observed >= threshold;
    }
    return false;
}

void AlertRule::validate() const {
    const std::string who = "alert rule '" + name + "': ";
    if (name.empty()) throw config_error("alert rule needs a name");
    if (metric.empty()) throw config_error(who + "metric must not be empty");
    if (window_ms <= 0) throw config_error(who + "window_ms must be > 0");
    if (cooldown_ms < 0) throw config_error(who + "cooldown_ms must be >= 0");
    if (min_points < 1) throw config_error(who + "min_points must be >= 1");
    if (aggregator == Aggregator::Count) throw config_error(who + "aggregator must be avg, min or max");
}

nlohmann::json to_json(const AlertRule& r) {
    return {{"name", r.name},
            {"metric", r.metric},
            {"window_ms", r.window_ms},
            {"aggregator", to_string(r.aggregator)},
            {"comparator", to_string(r.comparator)},
            {"threshold", r.threshold},
            {"cooldown_ms", r.cooldown_ms},
            {"min_points", r.min_points}};
}

AlertRule rule_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw config_error("alert rule must be an object");
    static const std::vector<std::string> known = {"name",       "metric",      "window_ms", "aggregator",
                                                   "comparator", "threshold",   "cooldown_ms", "min_points"};
    for (const auto& [key, _] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            throw config_error("unknown key 'alerts.rules[]." + key + "'");
        }
    }
    AlertRule r;
    try {
        r.name = j.at("name").get<std::string>();
        r.metric = j.value("metric", std::string("sentiment.score"));
        r.window_ms = j.value("window_ms", r.window_ms);
        r.aggregator = parse_aggregator(j.value("aggregator", std::string("avg")));
        r.comparator = parse_comparator(j.value("comparator", std::string("<")));
        r.threshold = j.at("threshold").get<double>();
        r.cooldown_ms = j.value("cooldown_ms", r.cooldown_ms);
        r.min_points = j.value("min_points", r.min_points);
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("bad alert rule: ") + e.what());
    }
    r.validate();
    return r;
}

nlohmann::json to_json(const AlertEvent& e) {
    return {{"rule", e.rule},
            {"fired_at", e.fired_at},
            {"value", e.value},
            {"threshold", e.threshold},
            {"window_start", e.window_start},
            {"window_end", e.window_end},
            {"points", e.points}};
}

std::vector<AlertEvent> evaluate_rules(std::span<const AlertRule> rules, const TimeSeriesStore& store,
                                       std::int64_t now, AlertState& state) {
    std::vector<AlertEvent> events;
    for (const auto& rule : rules) {
        const std::int64_t start = std::max<std::int64_t>(0, now - rule.window_ms);
        const auto points = store.query_range(rule.metric, start, std::max(start, now));
        if (points.size() < rule.min_points) continue;

        std::vector<double> values;
        values.reserve(points.size());
        for (const auto& p : points) values.push_back(p.value);
        const double observed = aggregate(rule.aggregator, values);
        if (!compare(rule.comparator, observed, rule.threshold)) continue;

        const auto last = state.last_fired.find(rule.name);
        if (last != state.last_fired.end() && now - last->second < rule.cooldown_ms) continue;

        state.last_fired[rule.name] = now;
        events.push_back({rule.name, now, observed, rule.threshold, start, now, points.size()});
    }
    return events;
}

std::vector<AlertEvent> replay_rules(std::span<const AlertRule> rules, const TimeSeriesStore& store,
                                     std::int64_t start, std::int64_t end, std::int64_t step_ms) {
    if (step_ms < 1) throw config_error("replay step must be >= 1 ms");
    if (start > end) throw config_error("replay start must be <= end");
    AlertState state;
    std::vector<AlertEvent> out;
    for (std::int64_t now = start + step_ms; now <= end; now += step_ms) {
        auto events = evaluate_rules(rules, store, now, state);
        out.insert(out.end(), events.begin(), events.end());
    }
    return out;
}

nlohmann::json DeliveryRecord::to_json() const {
    return {{"sink", sink}, {"rule", rule}, {"fired_at", fired_at}, {"ok", ok}, {"attempts", attempts}, {"error", error}};
}

FileSink::FileSink(std::string path) : path_(std::move(path)) {}

DeliveryRecord FileSink::deliver(const AlertEvent& event) {
    DeliveryRecord rec{name(), event.rule, event.fired_at, false, 1, {}};
    std::lock_guard lock(mu_);
    std::ofstream out(path_, std::ios::app | std::ios::binary);
    if (!out) {
        rec.error = "cannot open " + path_;
        return rec;
    }
    out << to_json(event).dump() << '\n';
    out.flush();
    rec.ok = static_cast<bool>(out);
    if (!rec.ok) rec.error = "write failed on " + path_;
    return rec;
}

WebhookSink::WebhookSink(std::string url, int max_attempts, int backoff_ms, int timeout_ms)
    : url_(std::move(url)), max_attempts_(std::max(1, max_attempts)), backoff_ms_(backoff_ms), timeout_ms_(timeout_ms) {
    const auto scheme = url_.find("://");
    if (scheme == std::string::npos || url_.substr(0, scheme) != "http") {
        throw config_error("webhook URL must start with http:// (got '" + url_ + "')");
    }
    const auto slash = url_.find('/', scheme + 3);
    host_ = url_.substr(0, slash);
    path_ = slash == std::string::npos ? "/" : url_.substr(slash);
}

DeliveryRecord WebhookSink::deliver(const AlertEvent& event) {
    DeliveryRecord rec{name(), event.rule, event.fired_at, false, 0, {}};
    const auto body = to_json(event).dump();
    httplib::Client client(host_);
    client.set_connection_timeout(std::chrono::milliseconds(timeout_ms_));
    client.set_read_timeout(std::chrono::milliseconds(timeout_ms_));
    for (int attempt = 1; attempt <= max_attempts_; ++attempt) {
        rec.attempts = attempt;
        const auto res = client.Post(path_, body, "application/json");
        if (res && res->status >= 200 && res->status < 300) {
            rec.ok = true;
            rec.error.clear();
            return rec;
        }
        rec.error = res ? "HTTP status " + std::to_string(res->status) : httplib::to_string(res.error());
        if (attempt < max_attempts_) {
            std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms_ << (attempt - 1)));
        }
    }
    return rec;
}

std::vector<DeliveryRecord> emit_alert(const AlertEvent& event, std::span<const std::shared_ptr<AlertSink>> sinks) {
    if (sinks.empty()) throw config_error("emit_alert needs at least one sink");
    std::vector<DeliveryRecord> records;
    records.reserve(sinks.size());
    for (const auto& sink : sinks) records.push_back(sink->deliver(event));
    return records;
}

}  // namespace scorestream
