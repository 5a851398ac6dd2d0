#include <cmath>

#include <gtest/gtest.h>

#include "gradient_check.hpp"
#include "scorestream/binary_io.hpp"
#include "scorestream/error.hpp"
#include "scorestream/regression.hpp"
#include "scorestream/rng.hpp"
#include "test_support.hpp"

using namespace scorestream;
using scorestream::testing::TempDir;

namespace {

FeatureMatrix matrix(std::vector<std::vector<double>> rows) {
    FeatureMatrix m(rows.size(), rows.empty() ? 0 : rows[0].size());
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c) m.at(r, c) = rows[r][c];
    return m;
}

struct LinearData {
    FeatureMatrix x;
    std::vector<double> y;
};

LinearData linear_data(std::size_t k, std::size_t dim, std::uint64_t seed) {
    Rng rng(seed);
    LinearData d{FeatureMatrix(k, dim), std::vector<double>(k)};
    std::vector<double> beta(dim);
    for (auto& b : beta) b = rng.uniform(-1.0, 1.0);
    for (std::size_t i = 0; i < k; ++i) {
        double y = 3.0;
        for (std::size_t j = 0; j < dim; ++j) {
            d.x.at(i, j) = rng.uniform(-3.0, 3.0) * (1.0 + j);
            y += beta[j] * d.x.at(i, j);
        }
        d.y[i] = y;
    }
    return d;
}

std::vector<double> predict_all(const RegressionModel& m, const FeatureMatrix& x) {
    std::vector<double> out;
    for (std::size_t i = 0; i < x.rows(); ++i) out.push_back(predict_score(m, x.row(i)));
    return out;
}

double brute_r_squared(const std::vector<double>& y, const std::vector<double>& f) {
    long double mean = 0;
    for (double v : y) mean += v;
    mean /= y.size();
    long double tot = 0, res = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        tot += (y[i] - mean) * (y[i] - mean);
        res += (y[i] - f[i]) * (y[i] - f[i]);
    }
    return double(1.0L - res / tot);
}

}  // namespace

TEST(Standardize, PopulationStd) {
    const auto s = standardize(matrix({{1.0}, {3.0}}));
    EXPECT_DOUBLE_EQ(s.standardizer.mean[0], 2.0);
    EXPECT_DOUBLE_EQ(s.standardizer.std[0], 1.0);
    EXPECT_DOUBLE_EQ(s.features.at(0, 0), -1.0);
    EXPECT_DOUBLE_EQ(s.features.at(1, 0), 1.0);
    EXPECT_FALSE(s.standardizer.constant[0]);
}

TEST(Standardize, ConstantColumnIsFlagged) {
    const auto s = standardize(matrix({{5.0, 1.0}, {5.0, 2.0}, {5.0, 6.0}}));
    EXPECT_TRUE(s.standardizer.constant[0]);
    EXPECT_FALSE(s.standardizer.constant[1]);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(s.features.at(i, 0), 0.0);
}

TEST(Standardize, ApplyIsPure) {
    const auto s = standardize(matrix({{1.0, 4.0}, {2.0, -1.0}, {7.0, 0.5}}));
    const std::vector<double> raw{3.0, 2.0};
    EXPECT_EQ(s.standardizer.apply(raw), s.standardizer.apply(raw));
    const std::vector<float> rawf{3.0f, 2.0f};
    EXPECT_EQ(s.standardizer.apply(rawf), s.standardizer.apply(raw));
}

TEST(Standardize, NeedsTwoRows) {
    EXPECT_THROW(standardize(matrix({{1.0}})), Error);
}

TEST(FitRegressor, RecoversExactLinearFunction) {
    const auto d = linear_data(400, 6, 5);
    RegressionParams p;
    p.l2_lambda = 0.0;
    p.epochs = 200;
    const auto m = fit_regressor(d.x, d.y, p);
    const auto r = evaluate_r_squared(d.y, predict_all(m, d.x));
    EXPECT_GT(r.r_squared, 0.999);
}

TEST(FitRegressor, SvrFitsLinearFunctionWell) {
    const auto d = linear_data(400, 6, 9);
    RegressionParams p;
    p.loss = LossKind::EpsilonInsensitive;
    p.l2_lambda = 0.0;
    p.epochs = 200;
    const auto m = fit_regressor(d.x, d.y, p);
    EXPECT_GT(evaluate_r_squared(d.y, predict_all(m, d.x)).r_squared, 0.99);
}

TEST(FitRegressor, ConstantTargetGivesZeroWeights) {
    auto d = linear_data(200, 4, 3);
    std::fill(d.y.begin(), d.y.end(), 3.5);
    RegressionParams p;
    p.epochs = 200;
    const auto m = fit_regressor(d.x, d.y, p);
    for (double w : m.weights) EXPECT_NEAR(w, 0.0, 1e-3);
    EXPECT_NEAR(m.bias, 3.5, 1e-3);
}

TEST(FitRegressor, SameSeedIsIdentical) {
    const auto d = linear_data(150, 5, 4);
    for (auto loss : {LossKind::Squared, LossKind::EpsilonInsensitive}) {
        RegressionParams p;
        p.loss = loss;
        const auto a = fit_regressor(d.x, d.y, p);
        const auto b = fit_regressor(d.x, d.y, p);
        EXPECT_TRUE(a == b);
        EXPECT_EQ(serialize_regressor(a), serialize_regressor(b));
    }
}

TEST(FitRegressor, StrongerL2ShrinksWeights) {
    const auto d = linear_data(300, 5, 12);
    double previous = INFINITY;
    for (double lambda : {0.0, 0.1, 1.0, 10.0}) {
        RegressionParams p;
        p.l2_lambda = lambda;
        p.epochs = 100;
        const auto m = fit_regressor(d.x, d.y, p);
        double norm = 0;
        for (double w : m.weights) norm += w * w;
        EXPECT_LT(norm, previous) << "lambda " << lambda;
        previous = norm;
    }
}

TEST(FitRegressor, ValidationAndDivergence) {
    RegressionParams p;
    p.epochs = 0;
    EXPECT_THROW(p.validate(), Error);
    p = RegressionParams{};
    p.learning_rate = -1;
    EXPECT_THROW(p.validate(), Error);

    const auto d = linear_data(50, 3, 1);
    p = RegressionParams{};
    p.learning_rate = 1e200;
    try {
        fit_regressor(d.x, d.y, p);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Runtime);
        EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos) << e.what();
    }
    EXPECT_THROW(fit_regressor(d.x, std::vector<double>(10, 1.0), RegressionParams{}), Error);
}

TEST(PredictScore, ConstantModelAndClip) {
    RegressionModel m;
    m.standardizer = standardize(matrix({{0.0, 1.0}, {2.0, 3.0}})).standardizer;
    m.weights = {0.0, 0.0};
    m.bias = 3.7;
    const std::vector<double> v{100.0, -4.0};
    EXPECT_DOUBLE_EQ(predict_score(m, v), 3.7);

    m.bias = 6.2;
    EXPECT_DOUBLE_EQ(predict_score(m, v, ScoreRange{1.0, 5.0}), 5.0);
    EXPECT_DOUBLE_EQ(predict_score(m, v), 6.2);
    m.bias = -2.0;
    EXPECT_DOUBLE_EQ(predict_score(m, v, ScoreRange{1.0, 5.0}), 1.0);
}

TEST(PredictScore, MatchesDotProductOracle) {
    Rng rng(21);
    const auto s = standardize(matrix({{0.0, 1.0, 2.0}, {2.0, 5.0, -1.0}, {1.0, 0.0, 4.0}}));
    RegressionModel m;
    m.standardizer = s.standardizer;
    m.weights = {0.5, -1.25, 2.0};
    m.bias = 2.5;
    for (int i = 0; i < 100; ++i) {
        std::vector<double> v{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)};
        double expected = m.bias;
        for (std::size_t j = 0; j < 3; ++j)
            expected += m.weights[j] * (v[j] - s.standardizer.mean[j]) / s.standardizer.std[j];
        EXPECT_NEAR(predict_score(m, v), expected, 1e-12);
    }
}

TEST(PredictScore, DimensionMismatchIsError) {
    RegressionModel m;
    m.standardizer = standardize(matrix({{0.0, 1.0}, {2.0, 3.0}})).standardizer;
    m.weights = {1.0, 1.0};
    EXPECT_THROW(predict_score(m, std::vector<double>{1.0}), Error);
}

TEST(RSquared, TaggedExamples) {
    const std::vector<double> y{1, 2, 3};
    EXPECT_DOUBLE_EQ(evaluate_r_squared(y, y).r_squared, 1.0);
    EXPECT_DOUBLE_EQ(evaluate_r_squared(y, std::vector<double>{2, 2, 2}).r_squared, 0.0);
    const auto r = evaluate_r_squared(y, std::vector<double>{1, 2, 2});
    EXPECT_DOUBLE_EQ(r.ss_tot, 2.0);
    EXPECT_DOUBLE_EQ(r.ss_res, 1.0);
    EXPECT_DOUBLE_EQ(r.r_squared, 0.5);
    EXPECT_EQ(r.n_test, 3u);
    EXPECT_FALSE(r.degenerate);
}

TEST(RSquared, ConstantTruthIsDegenerate) {
    const auto r = evaluate_r_squared(std::vector<double>{3, 3, 3}, std::vector<double>{1, 2, 3});
    EXPECT_TRUE(r.degenerate);
    EXPECT_EQ(r.r_squared, 0.0);
}

TEST(RSquared, MatchesBruteForceOnRandomInputs) {
    Rng rng(77);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + rng.below(300);
        std::vector<double> y(n), f(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = rng.uniform(1, 5);
            f[i] = y[i] + rng.uniform(-2, 2);
        }
        EXPECT_NEAR(evaluate_r_squared(y, f).r_squared, brute_r_squared(y, f), 1e-9);
    }
    EXPECT_THROW(evaluate_r_squared(std::vector<double>{1, 2}, std::vector<double>{1}), Error);
}

TEST(TrainTestSplit, PartitionIsSeededAndComplete) {
    const auto a = train_test_split(100, 0.2, 3);
    const auto b = train_test_split(100, 0.2, 3);
    EXPECT_EQ(a.train, b.train);
    EXPECT_EQ(a.test, b.test);
    EXPECT_EQ(a.test.size(), 20u);
    EXPECT_EQ(a.train.size(), 80u);
    std::vector<bool> seen(100);
    for (auto i : a.train) seen[i] = true;
    for (auto i : a.test) seen[i] = true;
    EXPECT_EQ(std::count(seen.begin(), seen.end(), true), 100);
    EXPECT_NE(train_test_split(100, 0.2, 4).test, a.test);
}

TEST(RegressionGradient, SquaredLoss) {
    const auto r = scorestream::testing::check_regression(LossKind::Squared, 40, 17);
    EXPECT_GE(r.configurations, 20);
    EXPECT_LT(r.worst_relative_error, 1e-4);
}

TEST(RegressionGradient, EpsilonInsensitiveLoss) {
    int redrawn = 0;
    const auto r = scorestream::testing::check_regression(LossKind::EpsilonInsensitive, 40, 18, &redrawn);
    EXPECT_GE(r.configurations, 20);
    EXPECT_LT(r.worst_relative_error, 1e-4);
}

TEST(PointwiseLoss, Values) {
    EXPECT_DOUBLE_EQ(pointwise_loss(LossKind::EpsilonInsensitive, 0.1, 0.05), 0.0);
    EXPECT_DOUBLE_EQ(pointwise_loss(LossKind::EpsilonInsensitive, 0.1, -0.6), 0.5);
    EXPECT_DOUBLE_EQ(pointwise_loss_derivative(LossKind::EpsilonInsensitive, 0.1, 0.5), 1.0);
    EXPECT_DOUBLE_EQ(pointwise_loss_derivative(LossKind::EpsilonInsensitive, 0.1, -0.5), -1.0);
    EXPECT_DOUBLE_EQ(pointwise_loss_derivative(LossKind::EpsilonInsensitive, 0.1, 0.0), 0.0);
}

TEST(RegressorPersistence, RoundTripAndCorruption) {
    TempDir dir;
    const auto d = linear_data(100, 4, 2);
    RegressionParams p;
    p.loss = LossKind::EpsilonInsensitive;
    const auto m = fit_regressor(d.x, d.y, p);
    save_regressor(m, dir / "r.rrml");
    EXPECT_TRUE(load_regressor(dir / "r.rrml") == m);

    auto bytes = serialize_regressor(m);
    auto bad = bytes;
    bad[1] = '?';
    write_file_atomic(dir / "magic.rrml", bad);
    bad = bytes;
    bad.resize(bad.size() - 10);
    write_file_atomic(dir / "short.rrml", bad);
    bad = bytes;
    bad[bytes.size() / 2] ^= 1;
    write_file_atomic(dir / "flip.rrml", bad);
    for (const char* name : {"magic.rrml", "short.rrml", "flip.rrml"}) {
        try {
            load_regressor(dir / name);
            ADD_FAILURE() << name;
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), ErrorKind::Integrity) << name;
        }
    }
}

TEST(LossKindNames, RoundTrip) {
    EXPECT_EQ(to_string(LossKind::Squared), "linear");
    EXPECT_EQ(to_string(LossKind::EpsilonInsensitive), "svr");
    EXPECT_EQ(parse_loss_kind("svr"), LossKind::EpsilonInsensitive);
    EXPECT_THROW(parse_loss_kind("tree"), Error);
}
