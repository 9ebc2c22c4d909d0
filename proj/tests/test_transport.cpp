#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include <pathineq/transport.hpp>

using namespace pathineq;

namespace {
EmpiricalMeasure random_paths(std::size_t n, std::uint64_t seed, int steps = 6) {
    return EmpiricalMeasure::from_bundle(sample_brownian(make_grid(1.0, steps), 1, n, seed));
}
}  // namespace

TEST(Exact, SingleAtoms) {
    auto g = make_grid(1.0, 5);
    auto a = sample_brownian(g, 2, 1, 1), b = sample_brownian(g, 2, 1, 2);
    auto r = wasserstein_exact(EmpiricalMeasure::from_bundle(a), EmpiricalMeasure::from_bundle(b), 2);
    EXPECT_NEAR(r.value, sup_distance(a[0], b[0]), 1e-14);
    auto r1 = wasserstein_exact(EmpiricalMeasure::from_bundle(a), EmpiricalMeasure::from_bundle(b), 1);
    EXPECT_NEAR(r1.value, sup_distance(a[0], b[0]), 1e-14);
}

TEST(Exact, SelfDistanceIsZeroWithIdentityPlan) {
    auto mu = random_paths(30, 5);
    auto r = wasserstein_exact(mu, mu, 2);
    EXPECT_EQ(r.value, 0.0);
    for (int i = 0; i < 30; ++i) EXPECT_EQ(r.plan.assignment[i], i);
    EXPECT_TRUE(r.plan.feasible(mu.weights(), mu.weights()));
}

TEST(Exact, MatchesBruteForce) {
    for (std::size_t n = 1; n <= 8; ++n) {
        auto mu = random_paths(n, 100 + n), nu = random_paths(n, 200 + n);
        auto r = wasserstein_exact(mu, nu, 2);
        EXPECT_NEAR(r.value, brute_force_w2_small(mu, nu), 1e-12) << "n=" << n;
    }
}

TEST(Exact, MetricProperties) {
    for (int rep = 0; rep < 5; ++rep) {
        auto a = random_paths(40, 10 * rep + 1), b = random_paths(40, 10 * rep + 2), c = random_paths(40, 10 * rep + 3);
        double ab = wasserstein_exact(a, b, 2).value, ba = wasserstein_exact(b, a, 2).value;
        double bc = wasserstein_exact(b, c, 2).value, ac = wasserstein_exact(a, c, 2).value;
        EXPECT_NEAR(ab, ba, 1e-9);
        EXPECT_LE(ac, ab + bc + 1e-9);
        EXPECT_LE(wasserstein_exact(a, b, 1).value, ab + 1e-12);
        auto r = wasserstein_exact(a, b, 2);
        EXPECT_TRUE(r.plan.feasible(a.weights(), b.weights()));
    }
}

TEST(Exact, RoutesUnequalSizesToEntropic) {
    auto mu = random_paths(10, 1), nu = random_paths(12, 2);
    auto r = wasserstein_exact(mu, nu, 2);
    EXPECT_TRUE(r.routed_to_entropic);
    EXPECT_GT(r.value, 0.0);
}

TEST(Exact, RejectsOversize) {
    auto mu = random_paths(20, 1);
    ExactConfig cfg;
    cfg.n_max = 10;
    EXPECT_THROW(wasserstein_exact(mu, mu, 2, cfg), std::invalid_argument);
    EXPECT_THROW(wasserstein_exact(mu, mu, 3), std::invalid_argument);
}

TEST(BruteForce, RejectsLargeN) {
    auto mu = random_paths(9, 1);
    EXPECT_THROW(brute_force_w2_small(mu, mu), std::invalid_argument);
}

TEST(BruteForce, ThreePointsByHand) {
    auto mu = EmpiricalMeasure::from_scalars({0.0, 1.0, 3.0});
    auto nu = EmpiricalMeasure::from_scalars({2.0, 0.5, 4.0});
    // sorted matching is optimal on the line: (0,.5),(1,2),(3,4)
    double expect = std::sqrt((0.25 + 1.0 + 1.0) / 3.0);
    EXPECT_NEAR(brute_force_w2_small(mu, nu), expect, 1e-15);
    EXPECT_NEAR(wasserstein_exact(mu, nu, 2).value, expect, 1e-15);
}

TEST(Entropic, SelfIsZero) {
    auto mu = random_paths(20, 3);
    auto r = wasserstein_entropic(mu, mu, 2, 0.05);
    EXPECT_LT(r.value, 1e-6);
    EXPECT_TRUE(r.converged);
}

TEST(Entropic, PointMassesWithinTwoPercent) {
    auto mu = EmpiricalMeasure::from_scalars({0.3}), nu = EmpiricalMeasure::from_scalars({1.7});
    double exact = wasserstein_exact(mu, nu, 2).value;
    double eps = 0.01 * exact * exact;
    auto r = wasserstein_entropic(mu, nu, 2, eps);
    EXPECT_NEAR(r.value, exact, 0.02 * exact);
}

TEST(Entropic, ErrorShrinksAsEpsDecreases) {
    auto mu = random_paths(64, 31, 10), nu = random_paths(64, 32, 10);
    double exact = wasserstein_exact(mu, nu, 2).value;
    double med = median_cost(cost_matrix(mu, nu, 2));
    double prev = std::numeric_limits<double>::infinity();
    for (double f : {1.0, 0.3, 0.1, 0.03, 0.01}) {
        auto r = wasserstein_entropic(mu, nu, 2, f * med);
        double err = std::abs(r.value - exact);
        EXPECT_LT(err, prev) << "factor " << f;
        EXPECT_LE(r.value, exact + 1e-9) << "factor " << f;
        prev = err;
    }
    EXPECT_LT(prev, 0.05 * exact);
}

TEST(Entropic, NonConvergenceIsFlagged) {
    auto mu = random_paths(16, 1), nu = random_paths(16, 2);
    SinkhornConfig cfg;
    cfg.max_iter = 1;
    auto r = wasserstein_entropic(mu, nu, 2, 1e-4, cfg);
    EXPECT_FALSE(r.converged);
}

TEST(Entropy, ClosedForms) {
    auto g = make_grid(2.0, 40);
    EXPECT_EQ(girsanov_entropy(GirsanovTilt::zero(1), g, 0, 0).value, 0.0);
    auto e = girsanov_entropy(GirsanovTilt::constant({1.5}), g, 0, 0);
    EXPECT_NEAR(e.value, 0.5 * 1.5 * 1.5 * 2.0, 1e-12);
    EXPECT_EQ(e.se, 0.0);
    EXPECT_EQ(e.method, EntropyMethod::ClosedForm);
}

TEST(Entropy, DeterministicRefinementIsStable) {
    auto q = GirsanovTilt::deterministic(1, [](double t, std::span<double> o) { o[0] = std::cos(t); }, 1.0, "cos");
    double coarse = girsanov_entropy(q, make_grid(1.0, 50), 0, 0).value;
    double fine = girsanov_entropy(q, make_grid(1.0, 800), 0, 0).value;
    double exact = 0.25 * (1.0 + std::sin(2.0) / 2.0);
    EXPECT_NEAR(fine, exact, 1e-3);
    EXPECT_NEAR(coarse, fine, 2.0 / 50);
}

TEST(Entropy, AdaptedMatchesStochasticIntegralEstimator) {
    auto g = make_grid(1.0, 50);
    auto q = GirsanovTilt::adapted(
        1, [](double, const PathView& w, std::span<double> o) { o[0] = std::sin(w.current()[0]); }, 1.0, "sin");
    const std::size_t n = 20000;
    auto e = girsanov_entropy(q, g, n, 77);
    ASSERT_EQ(e.method, EntropyMethod::MonteCarlo);

    // log dQ/dP along a Q-path: sum q_k dX_k - 1/2 sum q_k^2 dt
    auto paths = sample_tilted_brownian(g, q, n, 78);
    double m = 0, m2 = 0;
    for (const auto& p : paths.paths) {
        double s = 0;
        for (std::int64_t k = 0; k < g.steps; ++k) {
            double qk = std::sin(p(k, 0));
            s += qk * (p(k + 1, 0) - p(k, 0)) - 0.5 * qk * qk * g.dt();
        }
        m += s;
        m2 += s * s;
    }
    m /= n;
    double se2 = std::sqrt((m2 / n - m * m) / n);
    EXPECT_LT(std::abs(e.value - m), 3 * std::hypot(e.se, se2));
    EXPECT_GT(e.value, 0.0);
}

TEST(DiscreteEntropy, Cases) {
    EXPECT_EQ(relative_entropy_discrete({0.2, 0.8}, {0.2, 0.8}), 0.0);
    EXPECT_NEAR(relative_entropy_discrete({1.0, 0.0}, {0.5, 0.5}), std::log(2.0), 1e-15);
    EXPECT_TRUE(std::isinf(relative_entropy_discrete({0.5, 0.5}, {1.0, 0.0})));
}

TEST(Measure, WeightsValidated) {
    std::vector<std::vector<double>> pts{{0.0}, {1.0}};
    EXPECT_THROW(EmpiricalMeasure(1, 1, pts, {0.6, 0.6}), std::invalid_argument);
    EXPECT_THROW(EmpiricalMeasure(1, 1, pts, {-0.5, 1.5}), std::invalid_argument);
    EmpiricalMeasure m(1, 1, pts, {0.25, 0.75});
    EXPECT_FALSE(m.uniform());
}
