#pragma once

// Local HTTP front for a TimeSeriesStore.
//
//   POST /api/put        body: one point object or an array of them
//                        {metric, timestamp, value, tags}
//   GET  /api/query      ?metric=&start=&end=[&tags=k:v,k2:v2]  -> JSON array of points
//   GET  /api/downsample ?metric=&start=&end=&bucket=&agg=[&tags=...] -> JSON array of buckets
//   GET  /api/bands      ?metric=&start=&end=[&n=20&k=2]       -> JSON array of bands

#include <memory>
#include <string>

#include "scorestream/tsdb.hpp"

namespace scorestream {

class TsdbHttpServer {
public:
    explicit TsdbHttpServer(TimeSeriesStore& store);
    ~TsdbHttpServer();

    TsdbHttpServer(const TsdbHttpServer&) = delete;
    TsdbHttpServer& operator=(const TsdbHttpServer&) = delete;

    /// Binds and serves on a background thread. Port 0 picks a free port.
    /// Returns the bound port.
    int start(const std::string& host = "127.0.0.1", int port = 0);
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Parses "k:v,k2:v2".
TagMap parse_tag_filter(const std::string& text);

}  // namespace scorestream
