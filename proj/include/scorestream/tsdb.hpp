#pragma once

// Embedded time-series store for predicted scores.
//
// Points live in an ordered in-memory index per metric and are persisted to
// an append-only framed log (<dir>/points.log) that is replayed on open.
// Writes are idempotent on (metric, timestamp, tags): replaying an identical
// point is a no-op, a changed value for the same key overwrites.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "scorestream/frame_file.hpp"

namespace scorestream {

using TagMap = std::map<std::string, std::string>;

struct TimeSeriesPoint {
    std::string metric;
    std::int64_t timestamp = 0;  ///< ms since epoch
    double value = 0.0;
    TagMap tags;

    bool operator==(const TimeSeriesPoint&) const = default;
};

nlohmann::json to_json(const TimeSeriesPoint& p);
/// Parses {metric, timestamp, value, tags}; throws config_error on bad shape.
TimeSeriesPoint point_from_json(const nlohmann::json& j);

/// Throws config_error for an empty metric, negative timestamp or non-finite value.
void validate_point(const TimeSeriesPoint& p);

enum class Aggregator { Avg, Min, Max, Count };
Aggregator parse_aggregator(std::string_view name);
std::string to_string(Aggregator agg);

/// Aggregates values in iteration order. Empty input is the caller's problem.
double aggregate(Aggregator agg, std::span<const double> values);

struct Bucket {
    std::int64_t timestamp = 0;  ///< bucket start
    double value = 0.0;
    std::size_t count = 0;
    bool operator==(const Bucket&) const = default;
};

struct BandPoint {
    std::size_t index = 0;  ///< position in the input series of the window's last value
    double mean = 0.0;
    double sigma = 0.0;  ///< population standard deviation
    double upper = 0.0;
    double lower = 0.0;
    bool operator==(const BandPoint&) const = default;
};

/// Bollinger-style bands over a sliding window of the last `n` values, from
/// position n-1 onward. Empty when values.size() < n or n < 2.
std::vector<BandPoint> rolling_bands(std::span<const double> values, std::size_t n, double k);

class TimeSeriesStore {
public:
    explicit TimeSeriesStore(std::filesystem::path dir, bool sync_writes = true);
    ~TimeSeriesStore();

    TimeSeriesStore(const TimeSeriesStore&) = delete;
    TimeSeriesStore& operator=(const TimeSeriesStore&) = delete;

    /// Durable before return. Returns false when an identical point was already stored.
    bool write_point(const TimeSeriesPoint& point);

    /// All-or-nothing batch with a single sync. Returns the number of points
    /// that changed the store.
    std::size_t write_points(std::span<const TimeSeriesPoint> points);

    /// Half-open [start, end), ascending timestamp; `tags` filter is conjunctive.
    std::vector<TimeSeriesPoint> query_range(std::string_view metric, std::int64_t start, std::int64_t end,
                                             const TagMap& tags = {}) const;

    /// Buckets aligned to `start`; empty buckets are omitted.
    std::vector<Bucket> downsample(std::string_view metric, std::int64_t start, std::int64_t end,
                                   std::int64_t bucket_ms, Aggregator agg, const TagMap& tags = {}) const;

    std::size_t point_count() const;
    std::vector<std::string> metrics() const;
    const std::filesystem::path& log_path() const;

    /// Bytes dropped from a torn tail when the log was opened.
    std::uint64_t recovered_torn_bytes() const { return torn_bytes_; }

private:
    using Key = std::pair<std::int64_t, std::string>;  // (timestamp, canonical tags)
    using Series = std::map<Key, TimeSeriesPoint>;

    void catch_up_locked() const;
    bool apply(const TimeSeriesPoint& p) const;
    bool is_new(const TimeSeriesPoint& p) const;

    std::filesystem::path dir_;
    std::unique_ptr<FrameFile> log_;
    mutable std::shared_mutex mu_;
    mutable std::map<std::string, Series, std::less<>> series_;
    mutable std::uint64_t log_end_ = 0;
    mutable std::size_t count_ = 0;
    std::uint64_t torn_bytes_ = 0;
};

}  // namespace scorestream
