#include "scorestream/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "scorestream/binary_io.hpp"
#include "scorestream/broker.hpp"
#include "scorestream/error.hpp"

namespace scorestream {

namespace {

// Walks one JSON object, remembering which keys were consumed so the rest can
// be reported as unknown.
class Section {
public:
    Section(const nlohmann::json* j, std::string path, const std::string& source)
        : j_(j), path_(std::move(path)), source_(source) {
        if (j_ && !j_->is_object()) fail(path_.empty() ? "top level" : path_, "must be an object");
    }

    bool has(const std::string& key) {
        seen_.insert(key);
        return j_ && j_->contains(key) && !(*j_)[key].is_null();
    }

    Section child(const std::string& key) {
        if (!has(key)) return Section(nullptr, qualify(key), source_);
        return Section(&(*j_)[key], qualify(key), source_);
    }

    const nlohmann::json* raw(const std::string& key) { return has(key) ? &(*j_)[key] : nullptr; }

    void get(const std::string& key, std::string& out) {
        if (const auto* v = raw(key)) {
            if (!v->is_string()) fail(qualify(key), "must be a string");
            out = v->get<std::string>();
        }
    }
    void get(const std::string& key, bool& out) {
        if (const auto* v = raw(key)) {
            if (!v->is_boolean()) fail(qualify(key), "must be true or false");
            out = v->get<bool>();
        }
    }
    void get(const std::string& key, double& out) {
        if (const auto* v = raw(key)) {
            if (!v->is_number()) fail(qualify(key), "must be a number");
            out = v->get<double>();
        }
    }
    template <class Int>
        requires std::is_integral_v<Int>
    void get(const std::string& key, Int& out) {
        if (const auto* v = raw(key)) {
            if (!v->is_number_integer()) fail(qualify(key), "must be an integer");
            if constexpr (std::is_unsigned_v<Int>) {
                if (v->is_number_unsigned() || v->get<std::int64_t>() >= 0) {
                    out = static_cast<Int>(v->get<std::uint64_t>());
                    return;
                }
                fail(qualify(key), "must be >= 0");
            } else {
                out = static_cast<Int>(v->get<std::int64_t>());
            }
        }
    }
    void get_path(const std::string& key, std::filesystem::path& out, const std::filesystem::path& base) {
        std::string s;
        get(key, s);
        if (raw(key)) out = s.empty() ? std::filesystem::path() : resolve(s, base);
    }

    static std::filesystem::path resolve(const std::filesystem::path& p, const std::filesystem::path& base) {
        return (p.is_absolute() ? p : base / p).lexically_normal();
    }

    void finish() const {
        if (!j_) return;
        for (const auto& [key, _] : j_->items()) {
            if (!seen_.count(key)) fail(qualify(key), "is not a known key");
        }
    }

    [[noreturn]] void fail(const std::string& key, const std::string& what) const {
        throw config_error(source_ + ": key '" + key + "' " + what);
    }

    std::string qualify(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

private:
    const nlohmann::json* j_;
    std::string path_;
    const std::string& source_;
    std::set<std::string> seen_;
};

}  // namespace

PipelineConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir,
                                const std::string& source) {
    const auto base = std::filesystem::absolute(base_dir);
    PipelineConfig c;
    c.artifacts_dir = base / "models";
    c.report_path = base / "report.json";
    c.broker.data_dir = base / "broker";
    c.tsdb.dir = base / "tsdb";

    Section top(&j, "", source);
    top.get("seed", c.seed);

    {
        auto s = top.child("score_range");
        s.get("min", c.score_range.min);
        s.get("max", c.score_range.max);
        s.finish();
        if (!(c.score_range.min < c.score_range.max)) top.fail("score_range", "needs min < max");
    }
    {
        auto s = top.child("corpus");
        if (!s.has("path")) top.fail("corpus.path", "is required");
        s.get_path("path", c.corpus.path, base);
        if (c.corpus.path.empty()) top.fail("corpus.path", "must not be empty");
        s.get("text_field", c.corpus.mapping.text_field);
        s.get("score_field", c.corpus.mapping.score_field);
        s.get("id_field", c.corpus.mapping.id_field);
        s.finish();
        c.corpus.mapping.range = c.score_range;
    }
    {
        auto s = top.child("embedding");
        auto& e = c.embedding;
        s.get("dim", e.dim);
        s.get("window", e.window);
        s.get("negatives", e.negatives);
        s.get("epochs", e.epochs);
        s.get("alpha_start", e.alpha_start);
        s.get("alpha_end", e.alpha_end);
        s.get("min_count", e.min_count);
        s.get("subsample_t", e.subsample_t);
        s.get("infer_steps", e.infer_steps);
        s.finish();
        e.seed = c.seed;
        e.validate();
    }
    {
        auto s = top.child("regression");
        auto& r = c.regression;
        if (const auto* kinds = s.raw("kinds")) {
            if (!kinds->is_array() || kinds->empty()) s.fail("regression.kinds", "must be a non-empty array");
            r.kinds.clear();
            for (const auto& k : *kinds) {
                if (!k.is_string()) s.fail("regression.kinds", "must hold \"linear\" or \"svr\"");
                const auto kind = parse_loss_kind(k.get<std::string>());
                if (std::find(r.kinds.begin(), r.kinds.end(), kind) == r.kinds.end()) r.kinds.push_back(kind);
            }
        }
        s.get("epsilon", r.params.epsilon);
        s.get("l2_lambda", r.params.l2_lambda);
        s.get("epochs", r.params.epochs);
        s.get("learning_rate", r.params.learning_rate);
        s.get("test_fraction", r.test_fraction);
        s.finish();
        r.params.seed = c.seed;
        r.params.validate();
        if (!(r.test_fraction > 0.0 && r.test_fraction < 1.0)) top.fail("regression.test_fraction", "must be in (0, 1)");
    }
    {
        auto s = top.child("artifacts");
        s.get_path("dir", c.artifacts_dir, base);
        s.finish();
    }
    top.get_path("report_path", c.report_path, base);
    {
        auto s = top.child("broker");
        s.get_path("data_dir", c.broker.data_dir, base);
        s.get("topic", c.broker.topic);
        s.get("consumer", c.broker.consumer);
        s.get("sync_writes", c.broker.sync_writes);
        s.finish();
        if (!valid_topic_name(c.broker.topic)) top.fail("broker.topic", "must match [a-z0-9_.-]+");
        if (!valid_consumer_id(c.broker.consumer)) top.fail("broker.consumer", "must match [A-Za-z0-9_-]+");
    }
    {
        auto s = top.child("stream");
        auto& st = c.stream;
        s.get("batch_max", st.batch_max);
        s.get("batch_wait_ms", st.batch_wait_ms);
        s.get("clip", st.clip);
        s.get("workers", st.workers);
        std::string regressor = to_string(st.regressor);
        s.get("regressor", regressor);
        st.regressor = parse_loss_kind(regressor);
        s.get_path("stop_file", st.stop_file, base);
        s.get_path("reload_file", st.reload_file, base);
        s.get("trace", st.trace);
        s.finish();
        if (st.batch_max < 1) top.fail("stream.batch_max", "must be >= 1");
        if (st.batch_wait_ms < 0) top.fail("stream.batch_wait_ms", "must be >= 0");
        if (st.workers < 1) top.fail("stream.workers", "must be >= 1");
        const auto& kinds = c.regression.kinds;
        if (std::find(kinds.begin(), kinds.end(), st.regressor) == kinds.end()) {
            top.fail("stream.regressor", "names a model not listed in regression.kinds");
        }
    }
    {
        auto s = top.child("tsdb");
        s.get_path("dir", c.tsdb.dir, base);
        s.get("metric", c.tsdb.metric);
        s.get("http_port", c.tsdb.http_port);
        s.get("sync_writes", c.tsdb.sync_writes);
        s.finish();
        if (c.tsdb.metric.empty()) top.fail("tsdb.metric", "must not be empty");
        if (c.tsdb.http_port < -1 || c.tsdb.http_port > 65535) top.fail("tsdb.http_port", "must be -1 or a port");
    }
    {
        auto s = top.child("alerts");
        if (const auto* rules = s.raw("rules")) {
            if (!rules->is_array()) s.fail("alerts.rules", "must be an array");
            for (std::size_t i = 0; i < rules->size(); ++i) {
                try {
                    c.alerts.rules.push_back(rule_from_json((*rules)[i]));
                } catch (const Error& e) {
                    throw config_error(source + ": alerts.rules[" + std::to_string(i) + "]: " + e.what());
                }
            }
        }
        auto sinks = s.child("sinks");
        sinks.get_path("file", c.alerts.file_sink, base);
        sinks.get("webhook", c.alerts.webhook_url);
        sinks.get("webhook_attempts", c.alerts.webhook_attempts);
        sinks.finish();
        s.finish();
        if (c.alerts.webhook_attempts < 1) top.fail("alerts.sinks.webhook_attempts", "must be >= 1");
        if (!c.alerts.rules.empty() && c.alerts.file_sink.empty() && c.alerts.webhook_url.empty()) {
            top.fail("alerts.sinks", "needs a file or webhook sink when rules are defined");
        }
    }
    top.finish();
    return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw config_error("cannot read config file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(buf.str(), nullptr, /*allow_exceptions=*/true, /*ignore_comments=*/true);
    } catch (const nlohmann::json::parse_error& e) {
        throw config_error(path.string() + ": not valid JSON: " + e.what());
    }
    return config_from_json(j, std::filesystem::absolute(path).parent_path(), path.string());
}

nlohmann::json to_json(const PipelineConfig& c) {
    nlohmann::json kinds = nlohmann::json::array();
    for (const auto k : c.regression.kinds) kinds.push_back(to_string(k));
    nlohmann::json rules = nlohmann::json::array();
    for (const auto& r : c.alerts.rules) rules.push_back(to_json(r));
    const auto& e = c.embedding;
    const auto& r = c.regression;
    const auto& st = c.stream;
    return {
        {"seed", c.seed},
        {"score_range", {{"min", c.score_range.min}, {"max", c.score_range.max}}},
        {"corpus",
         {{"path", c.corpus.path.string()},
          {"text_field", c.corpus.mapping.text_field},
          {"score_field", c.corpus.mapping.score_field},
          {"id_field", c.corpus.mapping.id_field}}},
        {"embedding",
         {{"dim", e.dim},
          {"window", e.window},
          {"negatives", e.negatives},
          {"epochs", e.epochs},
          {"alpha_start", e.alpha_start},
          {"alpha_end", e.alpha_end},
          {"min_count", e.min_count},
          {"subsample_t", e.subsample_t},
          {"infer_steps", e.infer_steps}}},
        {"regression",
         {{"kinds", kinds},
          {"epsilon", r.params.epsilon},
          {"l2_lambda", r.params.l2_lambda},
          {"epochs", r.params.epochs},
          {"learning_rate", r.params.learning_rate},
          {"test_fraction", r.test_fraction}}},
        {"artifacts", {{"dir", c.artifacts_dir.string()}}},
        {"report_path", c.report_path.string()},
        {"broker",
         {{"data_dir", c.broker.data_dir.string()},
          {"topic", c.broker.topic},
          {"consumer", c.broker.consumer},
          {"sync_writes", c.broker.sync_writes}}},
        {"stream",
         {{"batch_max", st.batch_max},
          {"batch_wait_ms", st.batch_wait_ms},
          {"clip", st.clip},
          {"workers", st.workers},
          {"regressor", to_string(st.regressor)},
          {"stop_file", st.stop_file.string()},
          {"reload_file", st.reload_file.string()},
          {"trace", st.trace}}},
        {"tsdb",
         {{"dir", c.tsdb.dir.string()},
          {"metric", c.tsdb.metric},
          {"http_port", c.tsdb.http_port},
          {"sync_writes", c.tsdb.sync_writes}}},
        {"alerts",
         {{"rules", rules},
          {"sinks",
           {{"file", c.alerts.file_sink.string()},
            {"webhook", c.alerts.webhook_url},
            {"webhook_attempts", c.alerts.webhook_attempts}}}}},
    };
}

std::string config_hash(const PipelineConfig& config) {
    // only the settings that shape the trained models, so relocating a
    // project directory keeps its hash
    auto j = to_json(config);
    j["corpus"].erase("path");
    const nlohmann::json model_inputs = {
        {"seed", j["seed"]}, {"score_range", j["score_range"]}, {"corpus", j["corpus"]},
        {"embedding", j["embedding"]}, {"regression", j["regression"]}};
    char buf[9];
    std::snprintf(buf, sizeof buf, "%08x", crc32(std::string_view(model_inputs.dump())));
    return buf;
}

}  // namespace scorestream
