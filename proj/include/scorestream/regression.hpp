#pragma once

// Linear score regressors over document vectors: least squares and a primal
// linear SVR, both fit by SGD on standardized features.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "scorestream/corpus.hpp"

namespace scorestream {

enum class LossKind : std::uint32_t { Squared = 0, EpsilonInsensitive = 1 };

/// "linear" / "svr"; these names are also used in artifact file names.
std::string to_string(LossKind kind);
LossKind parse_loss_kind(std::string_view name);

/// Row-major K x D matrix of doubles.
class FeatureMatrix {
public:
    FeatureMatrix() = default;
    FeatureMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
    double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    /// Copies the selected rows, in order.
    FeatureMatrix select(std::span<const std::size_t> rows) const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

struct Standardizer {
    std::vector<double> mean;
    std::vector<double> std;       ///< population std; 1 for constant dimensions
    std::vector<bool> constant;    ///< dimension had zero variance in training data

    std::size_t dim() const { return mean.size(); }
    void apply(std::span<const double> raw, std::span<double> out) const;
    std::vector<double> apply(std::span<const double> raw) const;
    std::vector<double> apply(std::span<const float> raw) const;
    bool operator==(const Standardizer&) const = default;
};

struct StandardizedData {
    Standardizer standardizer;
    FeatureMatrix features;
};

/// Fits per-dimension mean/std on `raw` and returns the transformed copy.
/// Requires at least two rows.
StandardizedData standardize(const FeatureMatrix& raw);

struct RegressionParams {
    LossKind loss = LossKind::Squared;
    double epsilon = 0.1;       ///< SVR tube half-width
    double l2_lambda = 1e-4;
    std::uint32_t epochs = 50;
    double learning_rate = 0.01;  ///< decays as lr / sqrt(epoch)
    std::uint64_t seed = 1;

    void validate() const;
    bool operator==(const RegressionParams&) const = default;
};

struct RegressionModel {
    RegressionParams params;
    Standardizer standardizer;
    std::vector<double> weights;
    double bias = 0.0;

    std::size_t dim() const { return weights.size(); }
    bool operator==(const RegressionModel&) const = default;
};

/// Per-sample loss as a function of the residual r = f(x) - y.
double pointwise_loss(LossKind kind, double epsilon, double residual);
/// Derivative of pointwise_loss w.r.t. the residual (subgradient 0 on the SVR kink).
double pointwise_loss_derivative(LossKind kind, double epsilon, double residual);

struct LinearGradient {
    std::vector<double> weights;
    double bias = 0.0;
};

/// Mean pointwise loss over (x, y) plus (l2_lambda / 2) * |w|^2. Fills `grad`
/// with the analytic gradient when non-null.
double regularized_objective(std::span<const double> weights, double bias, const FeatureMatrix& x,
                             std::span<const double> y, const RegressionParams& params, LinearGradient* grad = nullptr);

/// SGD on already standardized features; the model records `standardizer` so
/// predictions can be made on raw vectors. Throws runtime_error on divergence.
RegressionModel fit_standardized(const Standardizer& standardizer, const FeatureMatrix& x_std,
                                 std::span<const double> y, const RegressionParams& params);

/// Standardizes `x_raw` and fits.
RegressionModel fit_regressor(const FeatureMatrix& x_raw, std::span<const double> y, const RegressionParams& params);

/// beta . standardize(vector) + c, optionally clipped into `clip`.
double predict_score(const RegressionModel& model, std::span<const double> vector,
                     std::optional<ScoreRange> clip = std::nullopt);
double predict_score(const RegressionModel& model, std::span<const float> vector,
                     std::optional<ScoreRange> clip = std::nullopt);

struct EvaluationReport {
    std::string model;
    double ss_tot = 0.0;
    double ss_res = 0.0;
    double r_squared = 0.0;
    std::size_t n_test = 0;
    bool degenerate = false;  ///< y_true constant; r_squared reported as 0
    std::uint64_t split_seed = 0;

    nlohmann::json to_json() const;
};

/// Coefficient of determination with the residual sum of squares
/// SS_res = sum (y_i - f_i)^2 and SS_tot = sum (y_i - mean(y))^2.
EvaluationReport evaluate_r_squared(std::span<const double> y_true, std::span<const double> y_pred);

struct TrainTestSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Seeded shuffle of 0..n-1; the last round(n * test_fraction) go to test.
TrainTestSplit train_test_split(std::size_t n, double test_fraction, std::uint64_t seed);

inline constexpr std::uint32_t kRegressionModelVersion = 1;

std::vector<std::uint8_t> serialize_regressor(const RegressionModel& model);
RegressionModel deserialize_regressor(std::span<const std::uint8_t> bytes);
void save_regressor(const RegressionModel& model, const std::filesystem::path& path);
RegressionModel load_regressor(const std::filesystem::path& path);

}  // namespace scorestream
