#include "scorestream/tsdb.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#include <nlohmann/json.hpp>

#include "scorestream/error.hpp"

namespace scorestream {

namespace {

std::string canonical_tags(const TagMap& tags) { return nlohmann::json(tags).dump(); }

bool matches(const TagMap& have, const TagMap& want) {
    for (const auto& [k, v] : want) {
        const auto it = have.find(k);
        if (it == have.end() || it->second != v) return false;
    }
    return true;
}

}  // namespace

nlohmann::json to_json(const TimeSeriesPoint& p) {
    return {{"metric", p.metric}, {"timestamp", p.timestamp}, {"value", p.value}, {"tags", p.tags}};
}

TimeSeriesPoint point_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw config_error("point must be a JSON object");
    TimeSeriesPoint p;
    try {
        p.metric = j.at("metric").get<std::string>();
        p.timestamp = j.at("timestamp").get<std::int64_t>();
        p.value = j.at("value").get<double>();
        if (const auto it = j.find("tags"); it != j.end() && !it->is_null()) {
            for (const auto& [k, v] : it->items()) p.tags[k] = v.is_string() ? v.get<std::string>() : v.dump();
        }
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("bad point payload: ") + e.what());
    }
    return p;
}

void validate_point(const TimeSeriesPoint& p) {
    if (p.metric.empty()) throw config_error("point metric must not be empty");
    if (p.timestamp < 0) throw config_error("point timestamp must be >= 0");
    if (!std::isfinite(p.value)) throw config_error("point value must be finite");
}

Aggregator parse_aggregator(std::string_view name) {
    if (name == "avg") return Aggregator::Avg;
    if (name == "min") return Aggregator::Min;
    if (name == "max") return Aggregator::Max;
    if (name == "count") return Aggregator::Count;
    throw config_error("unknown aggregator '" + std::string(name) + "' (expected avg, min, max or count)");
}

std::string to_string(Aggregator agg) {
    switch (agg) {
    case Aggregator::Avg: return "avg";
    case Aggregator::Min: return "min";
    case Aggregator::Max: return "max";
    case Aggregator::Count: return "count";
    }
    return "avg";
}

double aggregate(Aggregator agg, std::span<const double> values) {
    switch (agg) {
    case Aggregator::Count: return static_cast<double>(values.size());
    case Aggregator::Min: return *std::min_element(values.begin(), values.end());
    case Aggregator::Max: return *std::max_element(values.begin(), values.end());
    case Aggregator::Avg: {
        double sum = 0.0;
        for (double v : values) sum += v;
        return sum / static_cast<double>(values.size());
    }
    }
    return 0.0;
}

std::vector<BandPoint> rolling_bands(std::span<const double> values, std::size_t n, double k) {
    std::vector<BandPoint> out;
    if (n < 2 || values.size() < n) return out;
    out.reserve(values.size() - n + 1);
    for (std::size_t end = n; end <= values.size(); ++end) {
        const auto window = values.subspan(end - n, n);
        double sum = 0.0;
        for (double v : window) sum += v;
        const double mean = sum / static_cast<double>(n);
        double ss = 0.0;
        for (double v : window) ss += (v - mean) * (v - mean);
        const double sigma = std::sqrt(ss / static_cast<double>(n));
        out.push_back({end - 1, mean, sigma, mean + k * sigma, mean - k * sigma});
    }
    return out;
}

// ---------------------------------------------------------------- store

TimeSeriesStore::TimeSeriesStore(std::filesystem::path dir, bool sync_writes) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
    log_ = std::make_unique<FrameFile>(dir_ / "points.log", sync_writes);
    FrameFile::Lock lock(*log_, /*exclusive=*/true);
    const auto scan = log_->scan(0, /*repair=*/true);
    torn_bytes_ = scan.torn_bytes;
    for (const auto start : scan.starts) {
        apply(point_from_json(nlohmann::json::parse(log_->read_body(start))));
    }
    log_end_ = scan.end;
}

TimeSeriesStore::~TimeSeriesStore() = default;

const std::filesystem::path& TimeSeriesStore::log_path() const { return log_->path(); }

bool TimeSeriesStore::is_new(const TimeSeriesPoint& p) const {
    const auto s = series_.find(p.metric);
    if (s == series_.end()) return true;
    const auto it = s->second.find({p.timestamp, canonical_tags(p.tags)});
    return it == s->second.end() || !(it->second == p);
}

bool TimeSeriesStore::apply(const TimeSeriesPoint& p) const {
    auto& series = series_[p.metric];
    auto [it, inserted] = series.try_emplace({p.timestamp, canonical_tags(p.tags)}, p);
    if (inserted) {
        ++count_;
        return true;
    }
    if (it->second == p) return false;
    it->second = p;
    return true;
}

void TimeSeriesStore::catch_up_locked() const {
    if (log_->size() == log_end_) return;
    FrameFile::Lock lock(*log_, /*exclusive=*/false);
    const auto scan = log_->scan(log_end_, /*repair=*/false);
    for (const auto start : scan.starts) {
        apply(point_from_json(nlohmann::json::parse(log_->read_body(start))));
    }
    log_end_ = scan.end;
}

bool TimeSeriesStore::write_point(const TimeSeriesPoint& point) {
    return write_points(std::span(&point, 1)) == 1;
}

std::size_t TimeSeriesStore::write_points(std::span<const TimeSeriesPoint> points) {
    for (const auto& p : points) validate_point(p);

    std::unique_lock lock(mu_);
    FrameFile::Lock file_lock(*log_, /*exclusive=*/true);
    // absorb appends made by other processes, dropping any torn tail
    const auto scan = log_->scan(log_end_, /*repair=*/true);
    for (const auto start : scan.starts) {
        apply(point_from_json(nlohmann::json::parse(log_->read_body(start))));
    }
    log_end_ = scan.end;

    std::vector<std::string> bodies;
    std::vector<const TimeSeriesPoint*> fresh;
    std::map<std::pair<std::string, Key>, const TimeSeriesPoint*> pending;
    for (const auto& p : points) {
        if (!is_new(p)) continue;
        auto [it, inserted] = pending.try_emplace({p.metric, {p.timestamp, canonical_tags(p.tags)}}, &p);
        if (!inserted) {
            if (*it->second == p) continue;
            it->second = &p;
        }
        bodies.push_back(to_json(p).dump());
        fresh.push_back(&p);
    }
    if (bodies.empty()) return 0;

    const auto starts = log_->append_all(bodies, log_end_);
    log_end_ = starts.back() + FrameFile::kHeaderSize + bodies.back().size();
    std::size_t changed = 0;
    for (const auto* p : fresh) changed += apply(*p) ? 1 : 0;
    return changed;
}

std::vector<TimeSeriesPoint> TimeSeriesStore::query_range(std::string_view metric, std::int64_t start,
                                                          std::int64_t end, const TagMap& tags) const {
    if (start > end) throw config_error("query range start must be <= end");
    {
        std::unique_lock lock(mu_);
        catch_up_locked();
    }
    std::shared_lock lock(mu_);
    std::vector<TimeSeriesPoint> out;
    const auto s = series_.find(metric);
    if (s == series_.end()) return out;
    const auto lo = s->second.lower_bound({start, std::string()});
    for (auto it = lo; it != s->second.end() && it->first.first < end; ++it) {
        if (matches(it->second.tags, tags)) out.push_back(it->second);
    }
    return out;
}

std::vector<Bucket> TimeSeriesStore::downsample(std::string_view metric, std::int64_t start, std::int64_t end,
                                                std::int64_t bucket_ms, Aggregator agg, const TagMap& tags) const {
    if (bucket_ms < 1) throw config_error("bucket_ms must be >= 1");
    const auto points = query_range(metric, start, end, tags);
    std::vector<Bucket> out;
    std::vector<double> values;
    std::int64_t current = 0;
    const auto flush = [&] {
        if (!values.empty()) out.push_back({current, aggregate(agg, values), values.size()});
        values.clear();
    };
    for (const auto& p : points) {
        const std::int64_t bucket = start + (p.timestamp - start) / bucket_ms * bucket_ms;
        if (!values.empty() && bucket != current) flush();
        current = bucket;
        values.push_back(p.value);
    }
    flush();
    return out;
}

std::size_t TimeSeriesStore::point_count() const {
    {
        std::unique_lock lock(mu_);
        catch_up_locked();
    }
    std::shared_lock lock(mu_);
    return count_;
}

std::vector<std::string> TimeSeriesStore::metrics() const {
    std::shared_lock lock(mu_);
    std::vector<std::string> out;
    for (const auto& [m, _] : series_) out.push_back(m);
    return out;
}

}  // namespace scorestream
