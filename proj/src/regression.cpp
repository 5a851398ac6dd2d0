#include "scorestream/regression.hpp"

#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "scorestream/binary_io.hpp"
#include "scorestream/error.hpp"
#include "scorestream/rng.hpp"

namespace scorestream {

std::string to_string(LossKind kind) {
    return kind == LossKind::Squared ? "linear" : "svr";
}

LossKind parse_loss_kind(std::string_view name) {
    if (name == "linear" || name == "squared") return LossKind::Squared;
    if (name == "svr" || name == "epsilon_insensitive") return LossKind::EpsilonInsensitive;
    throw config_error("unknown regressor kind '" + std::string(name) + "' (expected linear or svr)");
}

FeatureMatrix FeatureMatrix::select(std::span<const std::size_t> rows) const {
    FeatureMatrix out(rows.size(), cols_);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto src = row(rows[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

// ---------------------------------------------------------------- standardizer

void Standardizer::apply(std::span<const double> raw, std::span<double> out) const {
    if (raw.size() != dim()) {
        throw config_error("feature dimension mismatch: got " + std::to_string(raw.size()) + ", expected " +
                           std::to_string(dim()));
    }
    for (std::size_t d = 0; d < raw.size(); ++d) out[d] = (raw[d] - mean[d]) / std[d];
}

std::vector<double> Standardizer::apply(std::span<const double> raw) const {
    std::vector<double> out(raw.size());
    apply(raw, out);
    return out;
}

std::vector<double> Standardizer::apply(std::span<const float> raw) const {
    std::vector<double> widened(raw.begin(), raw.end());
    return apply(std::span<const double>(widened));
}

StandardizedData standardize(const FeatureMatrix& raw) {
    const std::size_t K = raw.rows();
    const std::size_t D = raw.cols();
    if (K < 2) throw config_error("standardize needs at least 2 rows, got " + std::to_string(K));

    StandardizedData out;
    auto& s = out.standardizer;
    s.mean.assign(D, 0.0);
    s.std.assign(D, 1.0);
    s.constant.assign(D, false);
    for (std::size_t d = 0; d < D; ++d) {
        double m = 0.0;
        for (std::size_t k = 0; k < K; ++k) m += raw.at(k, d);
        m /= static_cast<double>(K);
        double var = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            const double c = raw.at(k, d) - m;
            var += c * c;
        }
        var /= static_cast<double>(K);
        s.mean[d] = m;
        if (var > 0.0) {
            s.std[d] = std::sqrt(var);
        } else {
            s.constant[d] = true;
        }
    }
    out.features = FeatureMatrix(K, D);
    for (std::size_t k = 0; k < K; ++k) s.apply(raw.row(k), out.features.row(k));
    return out;
}

// ---------------------------------------------------------------- losses

void RegressionParams::validate() const {
    if (epochs < 1) throw config_error("regression.epochs must be >= 1");
    if (!(learning_rate > 0.0)) throw config_error("regression.learning_rate must be > 0");
    if (!(l2_lambda >= 0.0)) throw config_error("regression.l2_lambda must be >= 0");
    if (!(epsilon >= 0.0)) throw config_error("regression.epsilon must be >= 0");
}

double pointwise_loss(LossKind kind, double epsilon, double residual) {
    if (kind == LossKind::Squared) return 0.5 * residual * residual;
    return std::max(0.0, std::abs(residual) - epsilon);
}

double pointwise_loss_derivative(LossKind kind, double epsilon, double residual) {
    if (kind == LossKind::Squared) return residual;
    if (residual > epsilon) return 1.0;
    if (residual < -epsilon) return -1.0;
    return 0.0;
}

namespace {

double linear(std::span<const double> w, double b, std::span<const double> x) {
    return std::inner_product(w.begin(), w.end(), x.begin(), b);
}

}  // namespace

double regularized_objective(std::span<const double> weights, double bias, const FeatureMatrix& x,
                             std::span<const double> y, const RegressionParams& params, LinearGradient* grad) {
    const std::size_t K = x.rows();
    const std::size_t D = weights.size();
    if (grad) {
        grad->weights.assign(D, 0.0);
        grad->bias = 0.0;
    }
    double loss = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        const auto row = x.row(k);
        const double r = linear(weights, bias, row) - y[k];
        loss += pointwise_loss(params.loss, params.epsilon, r);
        if (grad) {
            const double g = pointwise_loss_derivative(params.loss, params.epsilon, r);
            for (std::size_t d = 0; d < D; ++d) grad->weights[d] += g * row[d];
            grad->bias += g;
        }
    }
    const double inv = 1.0 / static_cast<double>(K);
    double norm2 = 0.0;
    for (double w : weights) norm2 += w * w;
    if (grad) {
        for (std::size_t d = 0; d < D; ++d) grad->weights[d] = grad->weights[d] * inv + params.l2_lambda * weights[d];
        grad->bias *= inv;
    }
    return loss * inv + 0.5 * params.l2_lambda * norm2;
}

RegressionModel fit_standardized(const Standardizer& standardizer, const FeatureMatrix& x_std,
                                 std::span<const double> y, const RegressionParams& params) {
    params.validate();
    const std::size_t K = x_std.rows();
    const std::size_t D = x_std.cols();
    if (K < 2) throw config_error("fit_regressor needs at least 2 samples, got " + std::to_string(K));
    if (y.size() != K) throw config_error("feature rows and score count differ");
    if (standardizer.dim() != D) throw config_error("standardizer dimension does not match features");

    RegressionModel model;
    model.params = params;
    model.standardizer = standardizer;
    model.weights.assign(D, 0.0);
    model.bias = 0.0;

    Rng rng(params.seed);
    std::vector<std::size_t> order(K);
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (std::uint32_t epoch = 1; epoch <= params.epochs; ++epoch) {
        const double lr = params.learning_rate / std::sqrt(static_cast<double>(epoch));
        rng.shuffle(std::span(order));
        for (const std::size_t k : order) {
            const auto row = x_std.row(k);
            const double r = linear(model.weights, model.bias, row) - y[k];
            const double g = pointwise_loss_derivative(params.loss, params.epsilon, r);
            for (std::size_t d = 0; d < D; ++d) {
                model.weights[d] -= lr * (g * row[d] + params.l2_lambda * model.weights[d]);
            }
            model.bias -= lr * g;
        }
        const double objective = regularized_objective(model.weights, model.bias, x_std, y, params);
        if (!std::isfinite(objective)) {
            throw runtime_error(to_string(params.loss) + " regressor diverged in epoch " + std::to_string(epoch));
        }
    }
    return model;
}

RegressionModel fit_regressor(const FeatureMatrix& x_raw, std::span<const double> y, const RegressionParams& params) {
    const auto data = standardize(x_raw);
    return fit_standardized(data.standardizer, data.features, y, params);
}

double predict_score(const RegressionModel& model, std::span<const double> vector, std::optional<ScoreRange> clip) {
    const auto z = model.standardizer.apply(vector);
    const double raw = linear(model.weights, model.bias, z);
    return clip ? clip->clamp(raw) : raw;
}

double predict_score(const RegressionModel& model, std::span<const float> vector, std::optional<ScoreRange> clip) {
    std::vector<double> widened(vector.begin(), vector.end());
    return predict_score(model, std::span<const double>(widened), clip);
}

// ---------------------------------------------------------------- evaluation

nlohmann::json EvaluationReport::to_json() const {
    return {{"model", model},   {"r2", r_squared},          {"ss_tot", ss_tot},         {"ss_res", ss_res},
            {"n_test", n_test}, {"degenerate", degenerate}, {"split_seed", split_seed}};
}

EvaluationReport evaluate_r_squared(std::span<const double> y_true, std::span<const double> y_pred) {
    if (y_true.size() != y_pred.size()) throw config_error("evaluate_r_squared: length mismatch");
    if (y_true.size() < 2) throw config_error("evaluate_r_squared needs at least 2 samples");

    EvaluationReport rep;
    rep.n_test = y_true.size();
    const double mean = std::accumulate(y_true.begin(), y_true.end(), 0.0) / static_cast<double>(y_true.size());
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        const double t = y_true[i] - mean;
        const double r = y_true[i] - y_pred[i];
        rep.ss_tot += t * t;
        rep.ss_res += r * r;
    }
    if (rep.ss_tot == 0.0) {
        rep.degenerate = true;
        rep.r_squared = 0.0;
    } else {
        rep.r_squared = 1.0 - rep.ss_res / rep.ss_tot;
    }
    return rep;
}

TrainTestSplit train_test_split(std::size_t n, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw config_error("test_fraction must be in (0, 1)");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(std::span(order));
    const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_fraction));
    TrainTestSplit split;
    split.train.assign(order.begin(), order.end() - static_cast<std::ptrdiff_t>(n_test));
    split.test.assign(order.end() - static_cast<std::ptrdiff_t>(n_test), order.end());
    return split;
}

// ---------------------------------------------------------------- persistence

namespace {
constexpr std::string_view kMagic = "RRML";
}

std::vector<std::uint8_t> serialize_regressor(const RegressionModel& model) {
    ByteWriter w;
    w.raw(kMagic);
    w.u32(kRegressionModelVersion);
    const auto& p = model.params;
    w.u32(static_cast<std::uint32_t>(p.loss));
    w.f64(p.epsilon);
    w.f64(p.l2_lambda);
    w.u32(p.epochs);
    w.f64(p.learning_rate);
    w.u64(p.seed);
    w.u64(model.dim());
    for (double m : model.standardizer.mean) w.f64(m);
    for (double s : model.standardizer.std) w.f64(s);
    for (bool c : model.standardizer.constant) w.u32(c ? 1 : 0);
    for (double b : model.weights) w.f64(b);
    w.f64(model.bias);
    auto bytes = w.take();
    const std::uint32_t crc = crc32(bytes);
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(crc >> (8 * i)));
    return bytes;
}

RegressionModel deserialize_regressor(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8 || std::string_view(reinterpret_cast<const char*>(bytes.data()), 4) != kMagic) {
        throw integrity_error("not a regression model (bad magic header)");
    }
    ByteReader header(bytes.subspan(4, 4));
    const auto version = header.u32();
    if (version != kRegressionModelVersion) {
        throw integrity_error("unsupported regression model version " + std::to_string(version));
    }
    if (bytes.size() < 12) throw integrity_error("regression model is truncated");
    const auto body = bytes.first(bytes.size() - 4);
    ByteReader tail(bytes.last(4));
    if (tail.u32() != crc32(body)) throw integrity_error("regression model checksum mismatch (truncated or corrupt file)");

    ByteReader r(body.subspan(8));
    RegressionModel m;
    auto& p = m.params;
    const auto kind = r.u32();
    if (kind > 1) throw integrity_error("regression model has unknown loss kind " + std::to_string(kind));
    p.loss = static_cast<LossKind>(kind);
    p.epsilon = r.f64();
    p.l2_lambda = r.f64();
    p.epochs = r.u32();
    p.learning_rate = r.f64();
    p.seed = r.u64();
    const auto D = r.u64();
    if (D > r.remaining() / 8) throw integrity_error("regression model is truncated");
    auto& s = m.standardizer;
    s.mean.resize(D);
    s.std.resize(D);
    s.constant.resize(D);
    for (auto& x : s.mean) x = r.f64();
    for (auto& x : s.std) x = r.f64();
    for (std::size_t d = 0; d < D; ++d) s.constant[d] = r.u32() != 0;
    m.weights.resize(D);
    for (auto& x : m.weights) x = r.f64();
    m.bias = r.f64();
    if (r.remaining() != 0) throw integrity_error("trailing bytes in regression model");
    return m;
}

void save_regressor(const RegressionModel& model, const std::filesystem::path& path) {
    write_file_atomic(path, serialize_regressor(model));
}

RegressionModel load_regressor(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw integrity_error("regression model not found: " + path.string());
    try {
        return deserialize_regressor(read_file_bytes(path));
    } catch (const Error& e) {
        throw integrity_error(path.string() + ": " + e.what());
    }
}

}  // namespace scorestream
