#include "scorestream/pipeline.hpp"

#include <chrono>

#include "scorestream/binary_io.hpp"
#include "scorestream/error.hpp"

namespace scorestream {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

void emit(JsonLog* log, const nlohmann::json& line) {
    if (log) log->write(line);
}

constexpr std::size_t kMinDocuments = 10;

}  // namespace

std::filesystem::path docvec_artifact(const std::filesystem::path& dir) { return dir / "docvec.rrpv"; }
std::filesystem::path regressor_artifact(const std::filesystem::path& dir, LossKind kind) {
    return dir / ("regressor." + to_string(kind) + ".rrml");
}
std::filesystem::path manifest_path(const std::filesystem::path& dir) { return dir / "MANIFEST"; }

nlohmann::json PhaseTimes::to_json() const {
    return {{"vocabulary_ms", vocabulary_ms}, {"embedding_ms", embedding_ms}, {"scores_ms", scores_ms},
            {"regression_ms", regression_ms}, {"evaluation_ms", evaluation_ms}, {"persist_ms", persist_ms}};
}

nlohmann::json OfflineRunReport::to_json() const {
    nlohmann::json epochs_json = nlohmann::json::array();
    for (const auto& e : epochs) epochs_json.push_back(e.to_json());
    nlohmann::json evals = nlohmann::json::array();
    for (const auto& e : evaluations) evals.push_back(e.to_json());
    return {{"corpus",
             {{"counters", corpus.to_json()},
              {"labeled_documents", labeled_documents},
              {"vocabulary_size", vocabulary_size}}},
            {"embedding", {{"epochs", epochs_json}}},
            {"evaluations", evals},
            {"artifacts", artifacts},
            {"config_hash", config_hash},
            {"phases", phases.to_json()},
            {"embedding_to_regression_time_ratio",
             phases.regression_ms > 0.0 ? phases.embedding_ms / phases.regression_ms : 0.0}};
}

OfflineRunReport run_offline(const PipelineConfig& config, JsonLog* progress) {
    const auto& path = config.corpus.path;
    if (!std::filesystem::is_regular_file(path)) throw config_error("corpus file not found: " + path.string());
    FileCorpus corpus(path, config.corpus.mapping);
    OfflineRunReport report;
    report.config_hash = config_hash(config);

    // pass 1: vocabulary, then the paragraph-vector epochs
    auto t0 = Clock::now();
    auto vocab = Vocabulary::build(corpus, config.embedding.min_count);
    report.corpus = corpus.last_counters();
    report.vocabulary_size = vocab.size();
    report.phases.vocabulary_ms = ms_since(t0);
    if (report.corpus.admitted < kMinDocuments) {
        throw config_error("corpus " + path.string() + " has " + std::to_string(report.corpus.admitted) +
                           " admissible documents; at least " + std::to_string(kMinDocuments) + " are required");
    }
    emit(progress, {{"event", "phase"}, {"phase", "vocabulary"}, {"ms", report.phases.vocabulary_ms},
                    {"vocabulary_size", vocab.size()}, {"counters", report.corpus.to_json()}});

    t0 = Clock::now();
    const auto model = train_paragraph_vectors(corpus, std::move(vocab), config.embedding, [&](const EpochStats& s) {
        report.epochs.push_back(s);
        auto line = s.to_json();
        line["event"] = "epoch";
        emit(progress, line);
    });
    report.phases.embedding_ms = ms_since(t0);
    emit(progress, {{"event", "phase"}, {"phase", "embedding"}, {"ms", report.phases.embedding_ms}});

    // pass 2: scores; unlabeled documents only contributed to the embedding
    t0 = Clock::now();
    std::vector<std::uint64_t> doc_rows;
    std::vector<double> y;
    corpus.for_each([&](const TokenizedDocument& doc) {
        if (!doc.score) return;
        doc_rows.push_back(doc.doc_index);
        y.push_back(*doc.score);
    });
    report.labeled_documents = y.size();
    if (y.size() < kMinDocuments) {
        throw config_error("corpus " + path.string() + " has " + std::to_string(y.size()) +
                           " scored documents; at least " + std::to_string(kMinDocuments) + " are required");
    }
    FeatureMatrix x(y.size(), model.params.dim);
    for (std::size_t i = 0; i < doc_rows.size(); ++i) {
        if (doc_rows[i] >= model.doc_vecs.rows()) throw runtime_error("corpus changed between passes");
        const auto v = model.doc_vecs.row(doc_rows[i]);
        std::copy(v.begin(), v.end(), x.row(i).begin());
    }
    report.phases.scores_ms = ms_since(t0);
    emit(progress, {{"event", "phase"}, {"phase", "scores"}, {"ms", report.phases.scores_ms},
                    {"labeled_documents", y.size()}});

    const auto split = train_test_split(y.size(), config.regression.test_fraction, config.seed);
    const auto x_train = x.select(split.train);
    const auto x_test = x.select(split.test);
    std::vector<double> y_train, y_test;
    for (auto i : split.train) y_train.push_back(y[i]);
    for (auto i : split.test) y_test.push_back(y[i]);

    std::vector<std::pair<LossKind, RegressionModel>> fitted;
    for (const auto kind : config.regression.kinds) {
        auto params = config.regression.params;
        params.loss = kind;
        params.seed = config.seed;
        t0 = Clock::now();
        fitted.emplace_back(kind, fit_regressor(x_train, y_train, params));
        report.phases.regression_ms += ms_since(t0);

        t0 = Clock::now();
        std::vector<double> predicted;
        predicted.reserve(y_test.size());
        for (std::size_t i = 0; i < x_test.rows(); ++i) predicted.push_back(predict_score(fitted.back().second, x_test.row(i)));
        auto eval = evaluate_r_squared(y_test, predicted);
        eval.model = to_string(kind);
        eval.split_seed = config.seed;
        report.phases.evaluation_ms += ms_since(t0);
        emit(progress, {{"event", "evaluation"}, {"report", eval.to_json()}});
        report.evaluations.push_back(std::move(eval));
    }
    emit(progress, {{"event", "phase"}, {"phase", "regression"}, {"ms", report.phases.regression_ms}});

    // models first, MANIFEST last; each replacement is a rename
    t0 = Clock::now();
    const auto& dir = config.artifacts_dir;
    std::filesystem::create_directories(dir);
    nlohmann::json files = nlohmann::json::object();
    {
        const auto bytes = serialize_model(model);
        write_file_atomic(docvec_artifact(dir), bytes);
        files[docvec_artifact(dir).filename().string()] = content_checksum(bytes);
        report.artifacts[docvec_artifact(dir).string()] = content_checksum(bytes);
    }
    for (const auto& [kind, reg] : fitted) {
        const auto bytes = serialize_regressor(reg);
        const auto p = regressor_artifact(dir, kind);
        write_file_atomic(p, bytes);
        files[p.filename().string()] = content_checksum(bytes);
        report.artifacts[p.string()] = content_checksum(bytes);
    }
    const nlohmann::json manifest = {{"version", 1},
                                     {"created_at_ms", wall_clock_ms()},
                                     {"config_hash", report.config_hash},
                                     {"dim", model.params.dim},
                                     {"files", files}};
    write_file_atomic(manifest_path(dir), manifest.dump(2) + "\n");
    report.phases.persist_ms = ms_since(t0);

    std::filesystem::create_directories(config.report_path.parent_path());
    write_file_atomic(config.report_path, report.to_json().dump(2) + "\n");
    emit(progress, {{"event", "phase"}, {"phase", "persist"}, {"ms", report.phases.persist_ms}});
    return report;
}

ModelSet load_artifacts(const std::filesystem::path& dir, LossKind regressor) {
    const auto mpath = manifest_path(dir);
    if (!std::filesystem::is_regular_file(mpath)) throw config_error("missing artifact manifest " + mpath.string());
    nlohmann::json manifest;
    try {
        const auto raw = read_file_bytes(mpath);
        manifest = nlohmann::json::parse(raw.begin(), raw.end());
        (void)manifest.at("files").at(docvec_artifact(dir).filename().string());
    } catch (const nlohmann::json::exception& e) {
        throw integrity_error("unreadable artifact manifest " + mpath.string() + ": " + e.what());
    }

    const auto verified_bytes = [&](const std::filesystem::path& p) {
        if (!std::filesystem::is_regular_file(p)) throw config_error("missing artifact " + p.string());
        const auto name = p.filename().string();
        const auto& listed = manifest["files"];
        if (!listed.contains(name)) throw integrity_error("artifact " + p.string() + " is not listed in " + mpath.string());
        auto bytes = read_file_bytes(p);
        const auto actual = content_checksum(bytes);
        if (actual != listed[name].get<std::string>()) {
            throw integrity_error("checksum mismatch for artifact " + p.string() + " (manifest " +
                                  listed[name].get<std::string>() + ", file " + actual + ")");
        }
        return std::pair(std::move(bytes), actual);
    };

    const auto [doc_bytes, doc_sum] = verified_bytes(docvec_artifact(dir));
    const auto [reg_bytes, reg_sum] = verified_bytes(regressor_artifact(dir, regressor));
    ModelSet set;
    set.docvec = std::make_shared<const ParagraphVectorModel>(deserialize_model(doc_bytes));
    set.regressor = std::make_shared<const RegressionModel>(deserialize_regressor(reg_bytes));
    if (set.regressor->dim() != set.docvec->params.dim) {
        throw integrity_error("artifacts in " + dir.string() + " disagree on vector dimension");
    }
    set.checksum = doc_sum + "-" + reg_sum;
    return set;
}

nlohmann::json evaluate_saved_models(const PipelineConfig& config, const std::filesystem::path& corpus_path) {
    if (!std::filesystem::is_regular_file(corpus_path)) throw config_error("corpus file not found: " + corpus_path.string());
    std::vector<ModelSet> sets;
    for (const auto kind : config.regression.kinds) sets.push_back(load_artifacts(config.artifacts_dir, kind));

    std::vector<double> y;
    std::vector<std::vector<double>> predicted(sets.size());
    FileCorpus corpus(corpus_path, config.corpus.mapping);
    const auto& docvec = *sets.front().docvec;
    corpus.for_each([&](const TokenizedDocument& doc) {
        if (!doc.score) return;
        y.push_back(*doc.score);
        const auto vec = infer_vector(docvec, doc.tokens);
        for (std::size_t k = 0; k < sets.size(); ++k) {
            predicted[k].push_back(predict_score(*sets[k].regressor, std::span<const float>(vec.values)));
        }
    });
    if (y.size() < 2) throw config_error("corpus " + corpus_path.string() + " needs at least 2 scored documents");

    nlohmann::json evals = nlohmann::json::array();
    for (std::size_t k = 0; k < sets.size(); ++k) {
        auto eval = evaluate_r_squared(y, predicted[k]);
        eval.model = to_string(config.regression.kinds[k]);
        evals.push_back(eval.to_json());
    }
    return {{"corpus", corpus_path.string()}, {"counters", corpus.last_counters().to_json()}, {"evaluations", evals}};
}

OnlineService::OnlineService(const PipelineConfig& config, JsonLog& log) {
    // refuse to start without a complete, verified model pair
    auto models = load_artifacts(config.artifacts_dir, config.stream.regressor);

    BrokerOptions bopts;
    bopts.sync_writes = config.broker.sync_writes;
    broker_ = std::make_unique<Broker>(config.broker.data_dir, bopts);
    store_ = std::make_unique<TimeSeriesStore>(config.tsdb.dir, config.tsdb.sync_writes);
    writer_ = std::make_unique<StorePointWriter>(*store_);

    StreamOptions sopts;
    sopts.topic = config.broker.topic;
    sopts.consumer = config.broker.consumer;
    sopts.metric = config.tsdb.metric;
    sopts.batch_max = config.stream.batch_max;
    sopts.batch_wait = std::chrono::milliseconds(config.stream.batch_wait_ms);
    sopts.scoring.mapping = config.corpus.mapping;
    sopts.scoring.clip = config.stream.clip;
    sopts.scoring.workers = config.stream.workers;
    sopts.stop_file = config.stream.stop_file;
    sopts.reload_file = config.stream.reload_file;
    sopts.trace = config.stream.trace;
    engine_ = std::make_unique<StreamEngine>(*broker_, *writer_, std::move(models), sopts, log);

    const auto dir = config.artifacts_dir;
    const auto kind = config.stream.regressor;
    engine_->set_reloader([dir, kind]() -> std::optional<ModelSet> { return load_artifacts(dir, kind); });

    if (!config.alerts.rules.empty()) {
        std::vector<std::shared_ptr<AlertSink>> sinks;
        if (!config.alerts.file_sink.empty()) sinks.push_back(std::make_shared<FileSink>(config.alerts.file_sink.string()));
        if (!config.alerts.webhook_url.empty()) {
            sinks.push_back(std::make_shared<WebhookSink>(config.alerts.webhook_url, config.alerts.webhook_attempts));
        }
        engine_->set_alerting(store_.get(), config.alerts.rules, std::move(sinks));
    }

    if (config.tsdb.http_port >= 0) {
        http_ = std::make_unique<TsdbHttpServer>(*store_);
        http_port_ = http_->start("127.0.0.1", config.tsdb.http_port);
        log.write({{"event", "http"}, {"port", http_port_}});
    }
    log.write({{"event", "started"},
               {"model", engine_->models().checksum},
               {"next_offset", engine_->summary().next_offset},
               {"recovery", broker_->recovery_report().to_json()}});
}

OnlineService::~OnlineService() {
    if (http_) http_->stop();
}

StreamSummary run_online(const PipelineConfig& config, const std::atomic<bool>* stop, JsonLog& log) {
    OnlineService service(config, log);
    return service.run(stop);
}

}  // namespace scorestream
