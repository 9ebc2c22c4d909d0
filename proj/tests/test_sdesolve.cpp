#include <gtest/gtest.h>

#include <cmath>

#include <pathineq/sdesolve.hpp>
#include <pathineq/transport.hpp>

using namespace pathineq;

namespace {
SdeModel zero_drift() { return constant_sigma_model([](double, double) { return 0.0; }, 1.0, 0.0, "bm"); }

SdeModel bump_drift() {
    return constant_sigma_model([](double, double x) { return -x * std::exp(-x * x); }, 1.0, 0.2, "bump");
}

SdeModel gauss_drift() {
    return constant_sigma_model([](double, double x) { return std::exp(-x * x); }, 1.0, 0.0, "gauss");
}

// time-dependent drift and non-constant sigma
SdeModel moving_model() {
    SdeModel m;
    m.b = [](double t, double x) { return (1.0 + 0.5 * t) * std::tanh(x) * std::exp(-x * x); };
    m.sigma = [](double, double x, std::span<double> o) {
        o[0] = 1.0 + 0.3 * std::sin(x);
        o[1] = 0.5;
    };
    m.d = 2;
    m.L_sigma = 0.3;
    m.sigma_inf = std::hypot(1.3, 0.5);
    m.ellipticity = 0.7 * 0.7 + 0.25;
    m.x0 = -0.3;
    m.label = "moving";
    return validate_sde_model(m);
}
}  // namespace

TEST(Euler, ZeroDriftIsBrownian) {
    auto g = make_grid(1.0, 50);
    auto noise = sample_brownian(g, 1, 20, 3);
    auto m = constant_sigma_model([](double, double) { return 0.0; }, 1.0, 0.7, "bm");
    auto x = euler_maruyama(m, noise);
    for (std::size_t i = 0; i < 20; ++i)
        for (std::size_t k = 0; k <= 50; ++k) EXPECT_NEAR(x[i](k, 0), 0.7 + noise[i](k, 0), 1e-12);
}

TEST(Euler, DegenerateSigmaRejected) {
    SdeModel m;
    m.d = 2;
    m.b = [](double, double) { return 1.0; };
    m.sigma = [](double, double, std::span<double> o) { o[0] = o[1] = 0.0; };
    m.ellipticity = 0.1;
    EXPECT_THROW(validate_sde_model(m), std::invalid_argument);
}

TEST(Euler, OrnsteinUhlenbeckTerminalVariance) {
    const std::size_t n = 10000;
    const double T = 1.0;
    auto g = make_grid(T, 100);
    auto m = constant_sigma_model([](double, double x) { return -x; }, 1.0, 0.0, "ou");
    auto x = euler_maruyama(m, sample_brownian(g, 1, n, 8));
    double s = 0, s2 = 0;
    for (const auto& p : x.paths) {
        s += p(100, 0);
        s2 += p(100, 0) * p(100, 0);
    }
    double mean = s / n, var = s2 / n - mean * mean;
    double exact = (1 - std::exp(-2 * T)) / 2;
    EXPECT_LT(std::abs(var - exact), 3 * exact * std::sqrt(2.0 / n));
}

TEST(Zvonkin, ZeroDriftIsIdentity) {
    auto m = zero_drift();
    auto z = build_zvonkin(m, 1.0, 10);
    EXPECT_TRUE(z.identity);
    auto c = zvonkin_constants(m, z);
    EXPECT_EQ(c.c1, 0.0);
    EXPECT_EQ(c.c2, 0.0);
    EXPECT_EQ(c.c3, 0.0);
    EXPECT_EQ(c.c4, 0.0);
    EXPECT_EQ(c.C_x, 6.0);
    EXPECT_EQ(z.F_at(0.5, 1.234), 1.234);
    EXPECT_EQ(z.G_at(0.5, -0.7), -0.7);
}

TEST(Zvonkin, ZeroDriftCollapsesToEulerBitwise) {
    auto g = make_grid(1.0, 40);
    auto noise = sample_brownian(g, 1, 30, 12);
    auto m = zero_drift();
    auto z = build_zvonkin(m, 1.0, 40);
    auto a = euler_maruyama(m, noise);
    auto b = solve_sde_zvonkin(m, z, noise);
    for (std::size_t i = 0; i < 30; ++i) EXPECT_EQ(a[i].values(), b.X[i].values());
}

TEST(Zvonkin, GaussianDriftConstant) {
    auto m = gauss_drift();
    auto z = build_zvonkin(m, 1.0, 4);
    auto c = zvonkin_constants(m, z);
    // int exp(-x^2) dx = sqrt(pi); the exponent of f spans twice that
    EXPECT_NEAR(c.c1, std::sqrt(M_PI), 1e-6);
    EXPECT_NEAR(c.c2, 1.0, 1e-6);
    EXPECT_NEAR(c.c3, 0.0, 1e-12);
    auto rep = table_lipschitz(m, z, c);
    EXPECT_NEAR(std::log(rep.f_max / rep.f_min), 2 * std::sqrt(M_PI), 1e-5);
    EXPECT_TRUE(rep.exact_hold());
    // the lower bound exp(-c1) on f fails for a one-signed drift
    EXPECT_LT(rep.f_min, std::exp(-c.c1));
}

TEST(Zvonkin, InverseIsExactOnTables) {
    for (auto m : {bump_drift(), gauss_drift(), moving_model()}) {
        auto z = build_zvonkin(m, 1.0, 20);
        auto c = zvonkin_constants(m, z);
        auto rep = table_lipschitz(m, z, c);
        EXPECT_LT(rep.max_FG_error, 1e-8) << m.label;
        EXPECT_LT(rep.max_GF_error, 1e-8) << m.label;
        EXPECT_TRUE(rep.exact_hold()) << m.label;
        for (double t : {0.0, 0.33, 0.5, 1.0})
            for (double y = z.y_min(t) - 1; y < z.y_max(t) + 1; y += 0.37)
                EXPECT_NEAR(z.F_at(t, z.G_at(t, y)), y, 1e-8) << m.label;
    }
}

TEST(Zvonkin, LiteralBoundsHoldForCentredBump) {
    // beta = -x exp(-x^2): f = exp(-exp(-x^2)) lies in [1/e, 1] and c1 = 1
    auto m = bump_drift();
    auto z = build_zvonkin(m, 1.0, 4);
    auto c = zvonkin_constants(m, z);
    EXPECT_NEAR(c.c1, 1.0, 1e-6);
    EXPECT_NEAR(c.c2, 1.0 / std::sqrt(2 * M_E), 1e-6);
    auto rep = table_lipschitz(m, z, c);
    EXPECT_TRUE(rep.literal_hold());
    EXPECT_TRUE(rep.exact_hold());
    EXPECT_NEAR(rep.f_min, std::exp(-1.0), 1e-6);
    EXPECT_NEAR(rep.f_max, 1.0, 1e-6);
}

TEST(Zvonkin, AnalyticAndFiniteDifferenceTimeDerivativesAgree) {
    SdeModel m = moving_model();
    m.dt_b = [](double, double x) { return 0.5 * std::tanh(x) * std::exp(-x * x); };
    m.dt_sigma = [](double, double, std::span<double> o) { o[0] = o[1] = 0.0; };
    auto za = build_zvonkin(m, 1.0, 50);
    SdeModel mf = m;
    mf.dt_b.reset();
    mf.dt_sigma.reset();
    auto zf = build_zvonkin(mf, 1.0, 50);
    ASSERT_TRUE(za.analytic_dt);
    ASSERT_FALSE(zf.analytic_dt);
    double worst = 0;
    for (std::size_t i = 0; i < za.dtF.size(); ++i) worst = std::max(worst, std::abs(za.dtF[i] - zf.dtF[i]));
    EXPECT_LT(worst, 1e-3);
    auto ca = zvonkin_constants(m, za), cf = zvonkin_constants(mf, zf);
    EXPECT_NEAR(ca.c3, cf.c3, 1e-3);
    EXPECT_GT(ca.c3, 0.0);
}

TEST(Zvonkin, ConstantFormulaVariants) {
    auto s = sde_constants_from(0.5, 0.2, 0.1, 0.0, 2.0, 0.5);
    double e = std::exp(1.0);
    double K2 = std::max(0.1 * e, 2.0 * 0.2 * e + e * 0.25);
    double K1 = std::max(0.1 * e, 2.0 * 0.2 * e + e * 0.5);
    EXPECT_DOUBLE_EQ(s.C_x_theorem, 6 * std::exp(0.5 + 15 * K2));
    EXPECT_DOUBLE_EQ(s.C_x_theorem_linear_sigma, 6 * std::exp(0.5 + 15 * K1));
    EXPECT_DOUBLE_EQ(s.C_x_pushforward, 6 * std::exp(1.0 + 15 * K2));
    EXPECT_DOUBLE_EQ(s.C_x_theorem, std::exp(0.5) * s.C_y);
    EXPECT_DOUBLE_EQ(s.C_x, s.C_x_theorem);
}

TEST(Zvonkin, ExplicitRangeWithFatTailRejected) {
    auto m = constant_sigma_model([](double, double x) { return 1.0 / (1.0 + x * x); }, 1.0, 0.0, "cauchy");
    ZvonkinConfig cfg;
    cfg.R = 3.0;
    try {
        build_zvonkin(m, 1.0, 4, cfg);
        FAIL() << "expected rejection";
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("tail"), std::string::npos);
    }
    auto nonint = constant_sigma_model([](double, double) { return 1.0; }, 1.0, 0.0, "const");
    EXPECT_THROW(build_zvonkin(nonint, 1.0, 4), std::invalid_argument);
}

TEST(Zvonkin, SmoothDriftMatchesDirectEuler) {
    const std::size_t n = 512;
    auto g = make_grid(1.0, 100);
    auto m = bump_drift();
    auto z = build_zvonkin(m, 1.0, 100);
    auto term = [&](const PathBundle& b) {
        std::vector<double> v;
        for (const auto& p : b.paths) v.push_back(p(100, 0));
        return EmpiricalMeasure::from_scalars(v);
    };
    auto e1 = term(euler_maruyama(m, sample_brownian(g, 1, n, 1)));
    auto e2 = term(euler_maruyama(m, sample_brownian(g, 1, n, 2)));
    auto zv = solve_sde_zvonkin(m, z, sample_brownian(g, 1, n, 3));
    double base = wasserstein_exact(e1, e2, 2).value;
    double cross = wasserstein_exact(term(zv.X), e2, 2).value;
    EXPECT_LT(cross, 3 * base);
    EXPECT_EQ(zv.range_exits, 0u);
}

TEST(Zvonkin, DiscontinuousDriftIsStable) {
    const std::size_t n = 1000;
    auto g = make_grid(1.0, 100);
    auto m = constant_sigma_model([](double, double x) { return std::abs(x) < 1.0 ? (x > 0 ? 1.0 : -1.0) : 0.0; },
                                  1.0, 0.0, "sign-bump");
    auto z = build_zvonkin(m, 1.0, 100);
    auto sol = solve_sde_zvonkin(m, z, sample_brownian(g, 1, n, 4));
    for (const auto& p : sol.X.paths)
        for (double v : p.values()) ASSERT_TRUE(std::isfinite(v));
    EXPECT_LT(sol.exit_fraction, 0.01);
}

TEST(Langevin, Construction) {
    EXPECT_THROW(langevin_model([](double) { return 0.0; }, 0.0), std::invalid_argument);
    auto bm = langevin_model([](double) { return 0.0; }, 0.5);
    std::vector<double> s(1);
    bm.sigma(0, 0, s);
    EXPECT_DOUBLE_EQ(s[0], 2.0);
    auto m = langevin_model([](double x) { return x * std::exp(-x * x); }, 2.0);
    m.sigma(0, 0, s);
    EXPECT_DOUBLE_EQ(s[0], 1.0);
    auto z = build_zvonkin(m, 1.0, 4);
    auto c = zvonkin_constants(m, z);
    EXPECT_NEAR(c.c1, 1.0, 1e-5);  // int |x| exp(-x^2) dx, kink at 0 costs O(dx^2)
    EXPECT_TRUE(std::isfinite(c.C_x));
}

TEST(StationaryDensity, Gaussian) {
    std::vector<double> xs{-2, -1, 0, 0.5, 3};
    auto d = stationary_density([](double x) { return 0.5 * x * x; }, 1.0, xs);
    for (std::size_t i = 0; i < xs.size(); ++i)
        EXPECT_NEAR(d[i], std::exp(-0.5 * xs[i] * xs[i]) / std::sqrt(2 * M_PI), 1e-10);
}

TEST(StationaryDensity, HardWallIsUniform) {
    auto U = [](double x) { return std::abs(x) <= 1.0 ? 0.0 : std::numeric_limits<double>::infinity(); };
    auto d = stationary_density(U, 1.0, {-0.5, 0.0, 0.9, 2.0});
    EXPECT_NEAR(d[0], 0.5, 1e-3);
    EXPECT_NEAR(d[2], 0.5, 1e-3);
    EXPECT_EQ(d[3], 0.0);
}

TEST(StationaryDensity, DoubleWell) {
    std::vector<double> xs;
    const double h = 1e-3;
    for (double x = -4; x <= 4 + 1e-12; x += h) xs.push_back(x);
    auto d = stationary_density([](double x) { return (x * x - 1) * (x * x - 1); }, 1.0, xs);
    double mass = 0;
    for (std::size_t i = 0; i + 1 < xs.size(); ++i) mass += 0.5 * h * (d[i] + d[i + 1]);
    EXPECT_NEAR(mass, 1.0, 1e-6);
    std::size_t mid = xs.size() / 2;
    EXPECT_NEAR(d[mid - 1000], d[mid + 1000], 1e-12);  // symmetric about 0
    EXPECT_GT(d[mid + 1000], d[mid]);                  // bimodal: x=1 beats x=0
}

TEST(StationaryDensity, NonIntegrableRejected) {
    EXPECT_THROW(stationary_density([](double) { return 0.0; }, 1.0, {0.0}), std::domain_error);
}
