#include <gtest/gtest.h>

#include <random>

#include <pathineq/regression.hpp>

using namespace pathineq;

TEST(Polynomial, RecoversCubicExactly) {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> nd;
    const int n = 400;
    Eigen::MatrixXd X(n, 2), Y(n, 1);
    for (int i = 0; i < n; ++i) {
        double a = nd(rng), b = nd(rng);
        X(i, 0) = a;
        X(i, 1) = b;
        Y(i, 0) = 1.0 - 2.0 * a + a * a * b + 0.5 * b * b * b;
    }
    auto r = Regressor::fit(X, Y, {BasisKind::Polynomial, 3, 0, 1e-14});
    EXPECT_EQ(r.degree_used(), 3);
    EXPECT_EQ(r.basis_size(), 10);
    double x[2] = {0.3, -1.2};
    EXPECT_NEAR(r.predict1(x), 1.0 - 0.6 + 0.09 * -1.2 + 0.5 * -1.728, 1e-8);
    EXPECT_LT(r.residual_rms()[0], 1e-8);
}

TEST(Polynomial, ConstantFeatureDroppedAndDegreeReduced) {
    const int n = 100;
    Eigen::MatrixXd X(n, 2), Y(n, 1);
    for (int i = 0; i < n; ++i) {
        X(i, 0) = 5.0;             // constant: dropped
        X(i, 1) = i % 2 ? 1.0 : -1.0;  // two values: only degree 1 is identifiable
        Y(i, 0) = 3.0 + X(i, 1);
    }
    auto r = Regressor::fit(X, Y, {});
    EXPECT_EQ(r.degree_used(), 1);
    EXPECT_EQ(r.degree_reductions(), 2);
    double x[2] = {5.0, 1.0};
    EXPECT_NEAR(r.predict1(x), 4.0, 1e-8);

    Eigen::MatrixXd X0 = Eigen::MatrixXd::Zero(n, 1);
    auto r0 = Regressor::fit(X0, Y, {});
    double z = 0.0;
    EXPECT_NEAR(r0.predict1(&z), 3.0, 1e-12);
}

TEST(Polynomial, MeanPredictionVarianceMatchesSampleMeanForIntercept) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd;
    const int n = 1000;
    Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, 1), Y(n, 1);
    for (int i = 0; i < n; ++i) Y(i, 0) = 2.0 + nd(rng);
    auto r = Regressor::fit(X, Y, {});
    double m = Y.mean();
    double var = (Y.array() - m).square().mean() / n;  // HC0 form
    EXPECT_NEAR(r.mean_prediction_var(X), var, 1e-10);
}

TEST(LocalAverage, ConvexCombinationAndMonotone) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd;
    const int n = 2000;
    Eigen::MatrixXd X(n, 1), Y(n, 1);
    for (int i = 0; i < n; ++i) {
        X(i, 0) = nd(rng);
        Y(i, 0) = std::tanh(X(i, 0)) + 0.3 * nd(rng);
    }
    BasisConfig cfg;
    cfg.kind = BasisKind::LocalAverage;
    auto r = Regressor::fit(X, Y, cfg);
    double lo = Y.minCoeff(), hi = Y.maxCoeff();
    for (double x = -5; x <= 5; x += 0.01) {
        double v = r.predict1(&x);
        EXPECT_GE(v, lo);
        EXPECT_LE(v, hi);
    }
    // larger targets pointwise give larger predictions
    Eigen::MatrixXd Y2 = Y.array() + 0.1 * X.array().abs();
    auto r2 = Regressor::fit(X, Y2, cfg);
    for (double x = -3; x <= 3; x += 0.05) EXPECT_GE(r2.predict1(&x), r.predict1(&x));
    double x0 = 0.0;
    EXPECT_NEAR(r.predict1(&x0), 0.0, 0.1);
}

TEST(LocalAverage, TiesAndSingleValue) {
    const int n = 64;
    Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, 1), Y(n, 1);
    for (int i = 0; i < n; ++i) Y(i, 0) = i;
    BasisConfig cfg;
    cfg.kind = BasisKind::LocalAverage;
    auto r = Regressor::fit(X, Y, cfg);
    EXPECT_EQ(r.basis_size(), 1);
    double z = 0.0;
    EXPECT_NEAR(r.predict1(&z), 31.5, 1e-12);
}

TEST(LocalAverage, RejectsMultipleFeatures) {
    Eigen::MatrixXd X = Eigen::MatrixXd::Zero(10, 2), Y = Eigen::MatrixXd::Zero(10, 1);
    BasisConfig cfg;
    cfg.kind = BasisKind::LocalAverage;
    EXPECT_THROW(Regressor::fit(X, Y, cfg), std::invalid_argument);
}

TEST(Features, ExtremaAreRunning) {
    auto g = make_grid(1.0, 4);
    Path p(g, 1, {0.0, 1.0, -2.0, 0.5, 0.2});
    double f[3];
    extract_features(FeatureMap::Extrema, p, 3, f);
    EXPECT_EQ(f[0], 0.5);
    EXPECT_EQ(f[1], 1.0);
    EXPECT_EQ(f[2], -2.0);
}
