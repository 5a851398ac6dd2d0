// scorestream command-line front end. Every command prints one JSON document
// on stdout; failures print {"error": ..., "kind": ...} and exit with 1
// (usage/config), 2 (runtime) or 3 (data integrity). Log lines go to stderr.

#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "scorestream/error.hpp"
#include "scorestream/pipeline.hpp"
#include "scorestream/synthetic.hpp"
#include "scorestream/tsdb_http.hpp"

namespace ss = scorestream;
using nlohmann::json;

namespace {

std::atomic<bool> g_stop{false};
std::atomic<bool> g_reload{false};

extern "C" void on_stop_signal(int) { g_stop = true; }
extern "C" void on_reload_signal(int) { g_reload = true; }

int fail(ss::ErrorKind kind, const std::string& message) {
    std::cout << json{{"error", message}, {"kind", ss::to_string(kind)}}.dump() << std::endl;
    return static_cast<int>(kind);
}

struct Globals {
    std::string config_path;
    bool quiet = false;
};

ss::PipelineConfig require_config(const Globals& g) {
    if (g.config_path.empty()) throw ss::config_error("--config (or SCORESTREAM_CONFIG) is required for this command");
    return ss::load_config(g.config_path);
}

std::filesystem::path tsdb_dir(const Globals& g, const std::string& override_dir) {
    if (!override_dir.empty()) return override_dir;
    return require_config(g).tsdb.dir;
}

ss::TagMap tag_filter(const std::vector<std::string>& filters) {
    ss::TagMap tags;
    for (const auto& s : filters) {
        for (auto& [k, v] : ss::parse_tag_filter(s)) tags[k] = v;
    }
    return tags;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"scorestream: document-vector sentiment scoring, offline and streaming"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("-c,--config", g.config_path, "pipeline config file (JSON, comments allowed)")
        ->envname("SCORESTREAM_CONFIG");
    app.add_flag("-q,--quiet", g.quiet, "suppress progress lines on stderr")->envname("SCORESTREAM_QUIET");

    // train
    auto* train = app.add_subcommand("train", "train and persist the models, then write the run report");

    // serve
    auto* serve = app.add_subcommand("serve", "score documents from the broker until SIGINT/SIGTERM or the stop file");
    int serve_port = -2;
    serve->add_option("--http-port", serve_port, "TSDB HTTP port (-1 off, 0 any); overrides the config")
        ->envname("SCORESTREAM_HTTP_PORT");

    // publish
    auto* publish = app.add_subcommand("publish", "append documents (one JSON object per line) to the broker");
    std::string publish_input;
    std::string publish_dir, publish_topic;
    publish->add_option("input", publish_input, "file path, or - for stdin")->required();
    publish->add_option("--data-dir", publish_dir, "broker data directory; overrides the config")
        ->envname("SCORESTREAM_BROKER_DIR");
    publish->add_option("--topic", publish_topic, "topic; overrides the config")->envname("SCORESTREAM_TOPIC");
    bool publish_nosync = false;
    publish->add_flag("--no-sync", publish_nosync, "skip fsync per message")->envname("SCORESTREAM_NO_SYNC");

    // query
    auto* query = app.add_subcommand("query", "points in [start, end), or buckets with --bucket");
    std::string q_metric, q_tsdb, q_agg = "avg";
    std::int64_t q_start = 0, q_end = 0, q_bucket = 0;
    std::vector<std::string> q_tags;
    query->add_option("metric", q_metric)->required();
    query->add_option("start", q_start, "ms, inclusive")->required();
    query->add_option("end", q_end, "ms, exclusive")->required();
    query->add_option("--bucket", q_bucket, "bucket width in ms")->envname("SCORESTREAM_BUCKET");
    query->add_option("--agg", q_agg, "avg|min|max|count")->envname("SCORESTREAM_AGG");
    query->add_option("--tag", q_tags, "key:value filter (repeatable)");
    query->add_option("--tsdb-dir", q_tsdb, "store directory; overrides the config")->envname("SCORESTREAM_TSDB_DIR");

    // bands
    auto* bands = app.add_subcommand("bands", "rolling mean +/- k sigma over the points in [start, end)");
    std::size_t b_n = 20;
    double b_k = 2.0;
    bands->add_option("metric", q_metric)->required();
    bands->add_option("start", q_start)->required();
    bands->add_option("end", q_end)->required();
    bands->add_option("-n,--window", b_n, "points per window")->envname("SCORESTREAM_BAND_N");
    bands->add_option("-k,--width", b_k, "sigma multiplier")->envname("SCORESTREAM_BAND_K");
    bands->add_option("--tag", q_tags, "key:value filter (repeatable)");
    bands->add_option("--tsdb-dir", q_tsdb, "store directory; overrides the config")->envname("SCORESTREAM_TSDB_DIR");

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "R^2 of the saved models on a scored corpus");
    std::string eval_corpus;
    evaluate->add_option("--corpus", eval_corpus, "defaults to corpus.path")->envname("SCORESTREAM_EVAL_CORPUS");

    // synth
    auto* synth = app.add_subcommand("synth", "write a synthetic scored corpus");
    ss::SyntheticOptions so;
    std::string synth_out;
    synth->add_option("-n,--docs", so.n_docs)->envname("SCORESTREAM_SYNTH_DOCS");
    synth->add_option("--seed", so.seed)->envname("SCORESTREAM_SEED");
    synth->add_option("-o,--out", synth_out)->required()->envname("SCORESTREAM_SYNTH_OUT");

    // alerts-test
    auto* alerts = app.add_subcommand("alerts-test", "replay the configured alert rules over stored points");
    std::optional<std::int64_t> a_start, a_end, a_step;
    alerts->add_option("--start", a_start, "ms; defaults to the earliest stored point");
    alerts->add_option("--end", a_end, "ms; defaults to one step past the latest stored point");
    alerts->add_option("--step", a_step, "ms between evaluations; defaults to a quarter of the shortest window");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail(ss::ErrorKind::Config, e.what());
    }

    std::ostream* log_stream = g.quiet ? nullptr : &std::cerr;
    ss::JsonLog log = log_stream ? ss::JsonLog(*log_stream) : ss::JsonLog();

    try {
        json result;
        if (train->parsed()) {
            const auto config = require_config(g);
            result = ss::run_offline(config, &log).to_json();
            result["report_path"] = config.report_path.string();
        } else if (serve->parsed()) {
            auto config = require_config(g);
            if (serve_port != -2) config.tsdb.http_port = serve_port;
            std::signal(SIGINT, on_stop_signal);
            std::signal(SIGTERM, on_stop_signal);
            std::signal(SIGHUP, on_reload_signal);
            ss::OnlineService service(config, log);
            std::atomic<bool> done{false};
            std::thread watcher([&] {
                while (!done) {
                    if (g_reload.exchange(false)) service.engine().request_reload();
                    std::this_thread::sleep_for(std::chrono::milliseconds(20));
                }
            });
            try {
                result = service.run(&g_stop).to_json();
            } catch (...) {
                done = true;
                watcher.join();
                throw;
            }
            done = true;
            watcher.join();
        } else if (publish->parsed()) {
            std::filesystem::path dir = publish_dir;
            std::string topic = publish_topic;
            if (dir.empty() || topic.empty()) {
                const auto config = require_config(g);
                if (dir.empty()) dir = config.broker.data_dir;
                if (topic.empty()) topic = config.broker.topic;
            }
            ss::BrokerOptions bo;
            bo.sync_writes = !publish_nosync;
            ss::Broker broker(dir, bo);
            std::ifstream file;
            std::istream* in = &std::cin;
            if (publish_input != "-") {
                file.open(publish_input, std::ios::binary);
                if (!file) throw ss::config_error("cannot read " + publish_input);
                in = &file;
            }
            std::uint64_t count = 0, first = 0, last = 0;
            std::string line;
            while (std::getline(*in, line)) {
                if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
                last = broker.publish(topic, line);
                if (count++ == 0) first = last;
            }
            result = {{"topic", topic}, {"published", count}};
            if (count) {
                result["first_offset"] = first;
                result["last_offset"] = last;
            }
        } else if (query->parsed()) {
            ss::TimeSeriesStore store(tsdb_dir(g, q_tsdb));
            const auto tags = tag_filter(q_tags);
            result = json::array();
            if (q_bucket > 0) {
                for (const auto& b : store.downsample(q_metric, q_start, q_end, q_bucket, ss::parse_aggregator(q_agg), tags)) {
                    result.push_back({{"timestamp", b.timestamp}, {"value", b.value}, {"count", b.count}});
                }
            } else {
                for (const auto& p : store.query_range(q_metric, q_start, q_end, tags)) result.push_back(ss::to_json(p));
            }
        } else if (bands->parsed()) {
            ss::TimeSeriesStore store(tsdb_dir(g, q_tsdb));
            const auto points = store.query_range(q_metric, q_start, q_end, tag_filter(q_tags));
            std::vector<double> values;
            for (const auto& p : points) values.push_back(p.value);
            result = json::array();
            for (const auto& b : ss::rolling_bands(values, b_n, b_k)) {
                result.push_back({{"timestamp", points[b.index].timestamp},
                                  {"mean", b.mean},
                                  {"sigma", b.sigma},
                                  {"upper", b.upper},
                                  {"lower", b.lower}});
            }
        } else if (evaluate->parsed()) {
            const auto config = require_config(g);
            result = ss::evaluate_saved_models(config, eval_corpus.empty() ? config.corpus.path
                                                                           : std::filesystem::path(eval_corpus));
        } else if (synth->parsed()) {
            result = ss::generate_synthetic_corpus(so, synth_out).to_json();
            result["path"] = synth_out;
        } else if (alerts->parsed()) {
            const auto config = require_config(g);
            const auto& rules = config.alerts.rules;
            if (rules.empty()) throw ss::config_error("no alert rules in " + g.config_path);
            ss::TimeSeriesStore store(config.tsdb.dir);
            std::int64_t lo = std::numeric_limits<std::int64_t>::max(), hi = 0;
            std::int64_t step = std::numeric_limits<std::int64_t>::max();
            for (const auto& r : rules) {
                step = std::min(step, std::max<std::int64_t>(1, r.window_ms / 4));
                for (const auto& p : store.query_range(r.metric, 0, std::numeric_limits<std::int64_t>::max())) {
                    lo = std::min(lo, p.timestamp);
                    hi = std::max(hi, p.timestamp);
                }
            }
            if (lo > hi) lo = hi;
            hi += step;
            const auto events = ss::replay_rules(rules, store, a_start.value_or(lo), a_end.value_or(hi), a_step.value_or(step));
            json list = json::array();
            for (const auto& e : events) list.push_back(ss::to_json(e));
            result = {{"start", a_start.value_or(lo)}, {"end", a_end.value_or(hi)}, {"events", list}};
        }
        std::cout << result.dump() << std::endl;
        return 0;
    } catch (const ss::Error& e) {
        return fail(e.kind(), e.what());
    } catch (const std::filesystem::filesystem_error& e) {
        return fail(ss::ErrorKind::Runtime, e.what());
    } catch (const std::exception& e) {
        return fail(ss::ErrorKind::Runtime, e.what());
    }
}
