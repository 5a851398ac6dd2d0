#include "scorestream/tsdb_http.hpp"

#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "scorestream/error.hpp"

namespace scorestream {

TagMap parse_tag_filter(const std::string& text) {
    TagMap tags;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto comma = text.find(',', pos);
        if (comma == std::string::npos) comma = text.size();
        const auto item = text.substr(pos, comma - pos);
        const auto colon = item.find(':');
        if (colon == std::string::npos || colon == 0) {
            throw config_error("bad tag filter '" + item + "' (expected key:value)");
        }
        tags[item.substr(0, colon)] = item.substr(colon + 1);
        pos = comma + 1;
    }
    return tags;
}

struct TsdbHttpServer::Impl {
    TimeSeriesStore& store;
    httplib::Server server;
    std::thread thread;
};

namespace {

void send_error(httplib::Response& res, int status, const std::string& msg) {
    res.status = status;
    res.set_content(nlohmann::json{{"error", msg}}.dump(), "application/json");
}

std::int64_t int_param(const httplib::Request& req, const char* name) {
    if (!req.has_param(name)) throw config_error(std::string("missing parameter ") + name);
    return std::stoll(req.get_param_value(name));
}

TagMap tags_param(const httplib::Request& req) {
    return req.has_param("tags") ? parse_tag_filter(req.get_param_value("tags")) : TagMap{};
}

template <class Fn>
void guarded(httplib::Response& res, Fn&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        send_error(res, e.kind() == ErrorKind::Config ? 400 : 500, e.what());
    } catch (const std::exception& e) {
        send_error(res, 400, e.what());
    }
}

}  // namespace

TsdbHttpServer::TsdbHttpServer(TimeSeriesStore& store) : impl_(new Impl{store, {}, {}}) {
    auto& srv = impl_->server;
    auto& st = impl_->store;

    srv.Post("/api/put", [&st](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto body = nlohmann::json::parse(req.body);
            std::vector<TimeSeriesPoint> points;
            if (body.is_array()) {
                for (const auto& p : body) points.push_back(point_from_json(p));
            } else {
                points.push_back(point_from_json(body));
            }
            const auto changed = st.write_points(points);
            res.set_content(nlohmann::json{{"received", points.size()}, {"written", changed}}.dump(),
                            "application/json");
        });
    });

    srv.Get("/api/query", [&st](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto points = st.query_range(req.get_param_value("metric"), int_param(req, "start"),
                                               int_param(req, "end"), tags_param(req));
            nlohmann::json out = nlohmann::json::array();
            for (const auto& p : points) out.push_back(to_json(p));
            res.set_content(out.dump(), "application/json");
        });
    });

    srv.Get("/api/downsample", [&st](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto agg = parse_aggregator(req.has_param("agg") ? req.get_param_value("agg") : "avg");
            const auto buckets = st.downsample(req.get_param_value("metric"), int_param(req, "start"),
                                               int_param(req, "end"), int_param(req, "bucket"), agg, tags_param(req));
            nlohmann::json out = nlohmann::json::array();
            for (const auto& b : buckets) out.push_back({{"timestamp", b.timestamp}, {"value", b.value}, {"count", b.count}});
            res.set_content(out.dump(), "application/json");
        });
    });

    srv.Get("/api/bands", [&st](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto points = st.query_range(req.get_param_value("metric"), int_param(req, "start"),
                                               int_param(req, "end"), tags_param(req));
            const std::size_t n = req.has_param("n") ? std::stoul(req.get_param_value("n")) : 20;
            const double k = req.has_param("k") ? std::stod(req.get_param_value("k")) : 2.0;
            std::vector<double> values;
            for (const auto& p : points) values.push_back(p.value);
            nlohmann::json out = nlohmann::json::array();
            for (const auto& b : rolling_bands(values, n, k)) {
                out.push_back({{"timestamp", points[b.index].timestamp},
                               {"mean", b.mean},
                               {"sigma", b.sigma},
                               {"upper", b.upper},
                               {"lower", b.lower}});
            }
            res.set_content(out.dump(), "application/json");
        });
    });
}

TsdbHttpServer::~TsdbHttpServer() { stop(); }

int TsdbHttpServer::start(const std::string& host, int port) {
    auto& srv = impl_->server;
    int bound = port;
    if (port == 0) {
        bound = srv.bind_to_any_port(host);
    } else if (!srv.bind_to_port(host, port)) {
        bound = -1;
    }
    if (bound < 0) throw runtime_error("cannot bind TSDB endpoint on " + host + ":" + std::to_string(port));
    impl_->thread = std::thread([&srv] { srv.listen_after_bind(); });
    srv.wait_until_ready();
    return bound;
}

void TsdbHttpServer::stop() {
    if (!impl_) return;
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace scorestream
