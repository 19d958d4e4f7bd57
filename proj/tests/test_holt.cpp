#include <gtest/gtest.h>

#include <random>

#include "iestrack/errors.hpp"
#include "iestrack/holt.hpp"
#include "support.hpp"

using namespace iestrack;
using testing_support::random_vector;

namespace {

/// Independent scalar smoother.
struct ScalarHolt {
    double level, trend, alpha, beta;
    double update(double x) {
        double previous = level;
        level = alpha * x + (1.0 - alpha) * (level + trend);
        trend = beta * (level - previous) + (1.0 - beta) * trend;
        return level + trend;
    }
};

}  // namespace

TEST(HoltInit, ConstantSeries) {
    Eigen::VectorXd v = Eigen::VectorXd::Constant(4, 1.02);
    HoltState h = holt_init(v, v, 0.8, 0.5);
    EXPECT_EQ(h.level, v);
    EXPECT_EQ(h.trend, Eigen::VectorXd::Zero(4));
}

TEST(HoltInit, TrendIsDifference) {
    Eigen::VectorXd v(3);
    v << 0.5, -0.2, 1.0;
    HoltState h = holt_init(Eigen::VectorXd::Zero(3), v, 0.8, 0.5);
    EXPECT_EQ(h.trend, v);
    EXPECT_EQ(h.level, v);
}

TEST(HoltInit, FiniteDifferenceOfSimulatedSteps) {
    std::mt19937_64 rng(3);
    Eigen::VectorXd x1 = Eigen::VectorXd::Ones(6) + random_vector(6, rng, 0.01);
    Eigen::VectorXd x2 = x1 + random_vector(6, rng, 1e-3);
    HoltState h = holt_init(x1, x2, 0.8, 0.5);
    for (Eigen::Index i = 0; i < 6; ++i) EXPECT_DOUBLE_EQ(h.trend(i), x2(i) - x1(i));
}

TEST(HoltInit, RejectsBadParameters) {
    Eigen::VectorXd v = Eigen::VectorXd::Ones(2);
    EXPECT_THROW(holt_init(v, v, 1.5, 0.5), InputError);
    EXPECT_THROW(holt_init(v, v, 0.5, -0.1), InputError);
    EXPECT_THROW(holt_init(v, Eigen::VectorXd::Ones(3), 0.5, 0.5), InputError);
}

TEST(HoltUpdate, FixedPoint) {
    Eigen::VectorXd v = Eigen::VectorXd::Constant(2, 0.97);
    HoltState h = holt_init(v, v, 1.0, 0.0);
    for (int t = 0; t < 50; ++t) {
        HoltForecast f = holt_update(h, v);
        EXPECT_EQ(f.forecast, v);
        h = f.state;
    }
}

TEST(HoltUpdate, LinearRampIsExact) {
    const double a = 0.9, b = 0.003;
    Eigen::VectorXd x0 = Eigen::VectorXd::Constant(1, a);
    Eigen::VectorXd x1 = Eigen::VectorXd::Constant(1, a + b);
    HoltState h = holt_init(x0, x1, 0.8, 0.5);
    for (int t = 2; t < 40; ++t) {
        HoltForecast f = holt_update(h, Eigen::VectorXd::Constant(1, a + b * t));
        EXPECT_NEAR(f.forecast(0), a + b * (t + 1), 1e-14);
        h = f.state;
    }
}

TEST(HoltUpdate, MatchesScalarOracleOnNoisyRamp) {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> noise(0.0, 0.01);
    const int n = 5;
    std::vector<std::vector<double>> series(n);
    for (int i = 0; i < n; ++i)
        for (int t = 0; t < 200; ++t) series[i].push_back(1.0 + 0.001 * (i + 1) * t + noise(rng));
    auto column = [&](int t) {
        Eigen::VectorXd v(n);
        for (int i = 0; i < n; ++i) v(i) = series[i][t];
        return v;
    };
    HoltState h = holt_init(column(0), column(1), 0.8, 0.5);
    std::vector<ScalarHolt> oracle;
    for (int i = 0; i < n; ++i) oracle.push_back({series[i][1], series[i][1] - series[i][0], 0.8, 0.5});
    for (int t = 2; t < 200; ++t) {
        HoltForecast f = holt_update(h, column(t));
        for (int i = 0; i < n; ++i) EXPECT_NEAR(f.forecast(i), oracle[i].update(series[i][t]), 1e-12);
        h = f.state;
    }
}

TEST(AffineTransition, AlphaZeroIsConstant) {
    std::mt19937_64 rng(5);
    Eigen::VectorXd x1 = random_vector(4, rng), x2 = random_vector(4, rng);
    HoltState h = holt_init(x1, x2, 0.0, 0.3);
    HoltState updated = holt_update(h, random_vector(4, rng)).state;
    AffineMap m = affine_transition(h, updated);
    EXPECT_EQ(m.gain, 0.0);
    EXPECT_EQ(m.apply(random_vector(4, rng)), m.apply(random_vector(4, rng)));
}

TEST(AffineTransition, AlphaOneAddsTrend) {
    Eigen::VectorXd v = Eigen::VectorXd::Constant(3, 1.0);
    HoltState h = holt_init(v, v, 1.0, 0.4);
    Eigen::VectorXd x(3);
    x << 1.01, 0.99, 1.0;
    HoltState updated = holt_update(h, x).state;
    AffineMap m = affine_transition(h, updated);
    EXPECT_EQ(m.gain, 1.0);
    EXPECT_TRUE(m.offset.isApprox(updated.trend, 1e-15));
    Eigen::VectorXd y(3);
    y << 0.5, 0.6, 0.7;
    EXPECT_TRUE(m.apply(y).isApprox(y + updated.trend, 1e-15));
}

TEST(AffineTransition, AtEstimateEqualsForecast) {
    std::mt19937_64 rng(9);
    HoltState h = holt_init(random_vector(6, rng), random_vector(6, rng), 0.8, 0.5);
    for (int t = 0; t < 20; ++t) {
        Eigen::VectorXd estimate = random_vector(6, rng);
        HoltForecast f = holt_update(h, estimate);
        AffineMap m = affine_transition(h, f.state);
        EXPECT_LT((m.apply(estimate) - f.forecast).cwiseAbs().maxCoeff(), 1e-14);
        h = f.state;
    }
}
