#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "generators.hpp"
#include "parallel.hpp"
#include "pathcore.hpp"
#include "random.hpp"
#include "regression.hpp"

namespace pathineq {

using TerminalFn = std::function<void(const Path&, std::span<double>)>;
using ScalarTerminal = std::function<double(const Path&)>;

inline TerminalFn scalar_terminal(ScalarTerminal f) {
    return [f = std::move(f)](const Path& p, std::span<double> out) { out[0] = f(p); };
}

struct BsdeModel {
    int m = 1;
    int d = 1;
    Generator gen;
    TerminalFn F;
    double L_F = 0.0;
    bool F_bounded_below = false;
    std::string label;
    std::vector<std::string> warnings;
};

// Spot checks of the declared metadata on random triples (omega, y, z).
// Throws std::invalid_argument when a probe contradicts the declared class;
// soft issues are appended to model.warnings.
inline void validate_bsde_model(BsdeModel& model, const TimeGrid& grid, std::uint64_t seed = 7,
                                int n_probe = 64) {
    if (model.m < 1 || model.d < 1) throw std::invalid_argument("BsdeModel: m and d must be >= 1");
    if (!model.gen.g || !model.F) throw std::invalid_argument("BsdeModel: generator and terminal are required");
    const auto& meta = model.gen.meta;
    const int m = model.m, md = model.m * model.d;
    auto paths = sample_brownian(grid, model.d, 16, derive_seed(seed, 11));
    auto rng = stream_for(seed, 0x51);
    std::normal_distribution<double> nd(0.0, 2.0);
    std::uniform_int_distribution<int> pick(0, 15);
    std::uniform_int_distribution<std::int64_t> kpick(0, grid.steps - 1);
    std::vector<double> y1(m), y2(m), z1(md), z2(md), zm(md), g1(m), g2(m), gm(m);
    const double rel = 1.0 + 1e-9;
    auto prefix_dist = [&](const Path& a, const Path& b, std::int64_t k) {
        double best = 0.0;
        for (std::int64_t s = 0; s <= k; ++s) {
            double q = 0.0;
            for (int j = 0; j < a.dim(); ++j) q += (a(s, j) - b(s, j)) * (a(s, j) - b(s, j));
            best = std::max(best, q);
        }
        return std::sqrt(best);
    };
    auto vdist = [](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
        return std::sqrt(s);
    };
    std::vector<double> F1(m), F2(m);
    for (int r = 0; r < n_probe; ++r) {
        const Path& w1 = paths[pick(rng)];
        const Path& w2 = paths[pick(rng)];
        std::int64_t k = kpick(rng);
        double t = grid.time(k);
        for (auto* v : {&y1, &y2})
            for (double& x : *v) x = nd(rng);
        for (auto* v : {&z1, &z2})
            for (double& x : *v) x = nd(rng);
        PathView v1(w1, k), v2(w2, k);
        model.F(w1, F1);
        model.F(w2, F2);
        if (vdist(F1, F2) > model.L_F * sup_distance(w1, w2) * rel + 1e-12)
            throw std::invalid_argument("BsdeModel '" + model.label + "': terminal violates the declared L_F on a probe");
        if (meta.cls != GeneratorClass::QuadraticConvex) {
            model.gen.g(t, v1, y1, z1, g1);
            model.gen.g(t, v2, y2, z2, g2);
            double lhs = vdist(g1, g2);
            double rhs = meta.L_g * (prefix_dist(w1, w2, k) + vdist(y1, y2) + vdist(z1, z2));
            if (lhs > rhs * rel + 1e-12)
                throw std::invalid_argument("BsdeModel '" + model.label + "': generator violates the declared L_g on a probe");
        } else {
            if (m != 1) throw std::invalid_argument("BsdeModel: quadratic class requires m = 1");
            for (int j = 0; j < md; ++j) zm[j] = 0.5 * (z1[j] + z2[j]);
            model.gen.g(t, v1, y1, z1, g1);
            model.gen.g(t, v1, y1, z2, g2);
            model.gen.g(t, v1, y1, zm, gm);
            if (gm[0] > 0.5 * (g1[0] + g2[0]) + 1e-10 * (1.0 + std::abs(g1[0]) + std::abs(g2[0])))
                throw std::invalid_argument("BsdeModel '" + model.label + "': generator is not convex in z on a probe");
            if (meta.growth_C && g1[0] > *meta.growth_C * (1.0 + norm2(z1)) * rel + 1e-12)
                throw std::invalid_argument("BsdeModel '" + model.label + "': generator exceeds the declared growth bound");
            double floor = 0.0;
            if (meta.lower_bound) {
                floor = meta.lower_bound->b;
                for (int j = 0; j < md; ++j) floor += meta.lower_bound->a[j] * z1[j];
            }
            if (g1[0] < floor - 1e-10 * (1.0 + std::abs(floor)))
                throw std::invalid_argument("BsdeModel '" + model.label + "': generator is below its declared minorant");
        }
    }
    if (meta.cls == GeneratorClass::QuadraticConvex && !model.F_bounded_below)
        model.warnings.push_back("terminal not declared bounded below; quadratic results rely on its exponential moments");
}

struct BsdeDiagnostics {
    std::vector<int> basis_size;
    std::vector<int> picard_iterations;
    std::vector<double> residual_rms;
    int degree_reductions = 0;
    bool converged = true;
    std::vector<std::string> warnings;

    nlohmann::json to_json() const {
        return {{"basis_size", basis_size},
                {"picard_iterations", picard_iterations},
                {"residual_rms", residual_rms},
                {"degree_reductions", degree_reductions},
                {"converged", converged},
                {"warnings", warnings}};
    }
};

// Fitted backward regressions; evaluates the solution on any path with the
// same grid without refitting.
class FrozenBsde {
public:
    virtual ~FrozenBsde() = default;
    virtual Path evaluate(const Path& w) const = 0;
    virtual Path evaluate_z(const Path&) const { throw std::logic_error("this solver has no fitted Z map"); }
};

struct BsdeSolution {
    int m = 1, d = 1;
    PathBundle Y;
    // Z on t_0..t_{steps-1}, m*d entries per row (row-major m x d). Row `steps`
    // repeats row steps-1 so the bundle shares the path layout.
    PathBundle Z;
    std::vector<double> slice_se;  // standard error of the slice mean of Y (first component)
    BsdeDiagnostics diag;
    std::shared_ptr<const FrozenBsde> frozen;

    double y0() const {
        double s = 0.0;
        for (const auto& p : Y.paths) s += p(0, 0);
        return s / static_cast<double>(Y.size());
    }
    PathBundle evaluate(const PathBundle& w) const {
        if (!frozen) throw std::logic_error("BsdeSolution: no fitted map");
        PathBundle out{w.grid, m, std::vector<Path>(w.size()), w.seed, {MeasureKind::Pushforward, Y.tag.label}};
        parallel_for(w.size(), [&](std::size_t i) { out.paths[i] = frozen->evaluate(w.paths[i]); });
        return out;
    }
    PathMap as_map() const {
        BsdeSolution light;
        light.m = m;
        light.d = d;
        light.Y.tag = Y.tag;
        light.frozen = frozen;
        return [light](const PathBundle& w) { return light.evaluate(w); };
    }
    PathMap z_map() const {
        if (!frozen) throw std::logic_error("BsdeSolution: no fitted map");
        auto fr = frozen;
        const int md = m * d;
        const std::string label = Z.tag.label;
        return [fr, md, label](const PathBundle& w) {
            PathBundle out{w.grid, md, std::vector<Path>(w.size()), w.seed, {MeasureKind::Pushforward, label}};
            parallel_for(w.size(), [&](std::size_t i) { out.paths[i] = fr->evaluate_z(w.paths[i]); });
            return out;
        };
    }
};

struct LsmcConfig {
    BasisConfig basis;
    // Basis for the Z regression. Unset: 16-bin local averages when the
    // feature map yields one feature, otherwise `basis`. Polynomial tails make
    // the sup over paths of |Z| noisy.
    std::optional<BasisConfig> z_basis;
    FeatureMap features = FeatureMap::Markov;
    int picard_cap = 20;
    double picard_tol = 1e-8;
};

namespace detail {

struct LsmcFrozen final : FrozenBsde {
    BsdeModel model;
    LsmcConfig cfg;
    TimeGrid grid;
    std::vector<Regressor> reg_y, reg_z;

    // Implicit step Y = C + dt g(t, w, Y, Z) by fixed-point iteration.
    int implicit_step(double t, const PathView& w, std::span<const double> C, std::span<const double> Zk,
                      std::span<double> Y) const {
        const int m = model.m;
        const double dt = grid.dt();
        std::vector<double> g(m);
        std::copy(C.begin(), C.end(), Y.begin());
        for (int it = 1; it <= cfg.picard_cap; ++it) {
            model.gen.g(t, w, Y, Zk, g);
            double delta = 0.0;
            for (int r = 0; r < m; ++r) {
                double nv = C[r] + dt * g[r];
                delta = std::max(delta, std::abs(nv - Y[r]));
                Y[r] = nv;
            }
            if (delta < cfg.picard_tol) return it;
        }
        return cfg.picard_cap + 1;
    }

    Path evaluate(const Path& w) const override {
        const int m = model.m, md = model.m * model.d;
        Path Y(grid, m);
        model.F(w, Y.row(grid.steps));
        std::vector<double> x(feature_count(cfg.features, model.d)), C(m), Zk(md);
        for (std::int64_t k = grid.steps - 1; k >= 0; --k) {
            extract_features(cfg.features, w, k, x.data());
            reg_y[k].predict(x.data(), C.data());
            reg_z[k].predict(x.data(), Zk.data());
            implicit_step(grid.time(k), PathView(w, k), C, Zk, Y.row(k));
        }
        return Y;
    }
    Path evaluate_z(const Path& w) const override {
        const int md = model.m * model.d;
        Path Z(grid, md);
        std::vector<double> x(feature_count(cfg.features, model.d));
        for (std::int64_t k = 0; k < grid.steps; ++k) {
            extract_features(cfg.features, w, k, x.data());
            reg_z[k].predict(x.data(), Z.row(k).data());
        }
        std::copy(Z.row(grid.steps - 1).begin(), Z.row(grid.steps - 1).end(), Z.row(grid.steps).begin());
        return Z;
    }
};

struct QuadFrozen final : FrozenBsde {
    ScalarTerminal F;
    double scale = 1.0;
    double shift = 0.0;   // regressions fit exp(scale (F - shift))
    std::optional<double> cap;
    FeatureMap features = FeatureMap::Markov;
    TimeGrid grid;
    int d = 1;
    std::vector<Regressor> reg_m;

    double terminal(const Path& w) const {
        double f = F(w);
        return cap ? std::min(f, *cap) : f;
    }
    Path evaluate(const Path& w) const override {
        Path Y(grid, 1);
        Y(grid.steps, 0) = terminal(w);
        std::vector<double> x(feature_count(features, d));
        for (std::int64_t k = 0; k < grid.steps; ++k) {
            extract_features(features, w, k, x.data());
            double M = reg_m[k].predict1(x.data());
            if (!(M > 0.0)) throw std::domain_error("quadratic solver: non-positive conditional mean off-sample");
            Y(k, 0) = std::log(M) / scale + shift;
        }
        return Y;
    }
};

inline void check_noise(const TimeGrid& grid, const PathBundle& noise, int d, const char* who) {
    noise.validate();
    if (!(noise.grid == grid)) throw std::invalid_argument(std::string(who) + ": noise grid differs from solver grid");
    if (noise.dim != d) throw std::invalid_argument(std::string(who) + ": noise dimension differs from model d");
    if (noise.size() < 2) throw std::invalid_argument(std::string(who) + ": need at least two noise paths");
}

}  // namespace detail

// Backward least-squares Monte Carlo with an implicit-in-Y, explicit-in-Z step.
// Each slice regresses the realized cash flow F + sum of later generator terms.
inline BsdeSolution solve_bsde_lsmc(const BsdeModel& model, const TimeGrid& grid, const PathBundle& noise,
                                    const LsmcConfig& cfg = {}) {
    if (model.gen.meta.cls == GeneratorClass::QuadraticConvex)
        throw std::invalid_argument("solve_bsde_lsmc: generator class must be Lipschitz or Linear");
    detail::check_noise(grid, noise, model.d, "solve_bsde_lsmc");
    const int m = model.m, d = model.d, md = m * d;
    const std::size_t n = noise.size();
    const double dt = grid.dt();
    const auto N = grid.steps;

    auto fr = std::make_shared<detail::LsmcFrozen>();
    fr->model = model;
    fr->cfg = cfg;
    fr->grid = grid;
    fr->reg_y.resize(N);
    fr->reg_z.resize(N);

    BsdeSolution sol;
    sol.m = m;
    sol.d = d;
    sol.Y = PathBundle{grid, m, std::vector<Path>(n, Path(grid, m)), noise.seed, {MeasureKind::Pushforward, model.label}};
    sol.Z = PathBundle{grid, md, std::vector<Path>(n, Path(grid, md)), noise.seed, {MeasureKind::Pushforward, model.label + ":Z"}};
    sol.slice_se.assign(N + 1, 0.0);
    sol.diag.basis_size.assign(N, 0);
    sol.diag.picard_iterations.assign(N, 0);
    sol.diag.residual_rms.assign(N, 0.0);
    sol.diag.warnings = model.warnings;

    parallel_for(n, [&](std::size_t i) { model.F(noise[i], sol.Y[i].row(N)); });

    // S holds F + sum_{j > k} dt g_j per path: every slice regresses realized
    // cash flows, so regression errors do not compound through the sweep. Z
    // regresses the centred one-step increment (Y_{k+1} - E[Y_{k+1}|x_k]) dW_k / dt,
    // whose noise is O(1) rather than O((T - t) / dt).
    BasisConfig zb = cfg.z_basis ? *cfg.z_basis
                 : feature_count(cfg.features, d) == 1 ? BasisConfig{BasisKind::LocalAverage, 3, 16, 1e-10}
                                                        : cfg.basis;
    Eigen::MatrixXd S(n, m), Ynext(n, m), ZT(n, md);
    for (std::size_t i = 0; i < n; ++i)
        for (int r = 0; r < m; ++r) S(i, r) = sol.Y[i](N, r);
    std::vector<int> iters(n);
    for (std::int64_t k = N - 1; k >= 0; --k) {
        Eigen::MatrixXd X = slice_features(cfg.features, noise, k);
        Regressor ry = Regressor::fit(X, S, cfg.basis);
        Eigen::MatrixXd C = ry.predict(X);
        for (std::size_t i = 0; i < n; ++i)
            for (int r = 0; r < m; ++r) Ynext(i, r) = sol.Y[i](k + 1, r);
        Eigen::MatrixXd D = Regressor::fit(X, Ynext, cfg.basis).predict(X);
        for (std::size_t i = 0; i < n; ++i)
            for (int r = 0; r < m; ++r)
                for (int j = 0; j < d; ++j)
                    ZT(i, r * d + j) = (Ynext(i, r) - D(i, r)) * (noise[i](k + 1, j) - noise[i](k, j)) / dt;
        Regressor rz = Regressor::fit(X, ZT, zb);
        Eigen::MatrixXd Zk = rz.predict(X);
        const double t = grid.time(k);
        parallel_for(n, [&](std::size_t i) {
            std::vector<double> c(m), z(md), g(m);
            for (int r = 0; r < m; ++r) c[r] = C(i, r);
            for (int q = 0; q < md; ++q) z[q] = Zk(i, q);
            PathView w(noise[i], k);
            auto Yk = sol.Y[i].row(k);
            iters[i] = fr->implicit_step(t, w, c, z, Yk);
            model.gen.g(t, w, Yk, z, g);
            for (int r = 0; r < m; ++r) S(i, r) += dt * g[r];
            std::copy(z.begin(), z.end(), sol.Z[i].row(k).begin());
            if (k == N - 1) std::copy(z.begin(), z.end(), sol.Z[i].row(N).begin());
        });
        int worst = *std::max_element(iters.begin(), iters.end());
        if (worst > cfg.picard_cap) sol.diag.converged = false;
        sol.diag.picard_iterations[k] = std::min(worst, cfg.picard_cap);
        sol.diag.basis_size[k] = ry.basis_size();
        sol.diag.residual_rms[k] = ry.residual_rms()[0];
        sol.diag.degree_reductions += ry.degree_reductions() + rz.degree_reductions();
        sol.slice_se[k] = std::sqrt(std::max(0.0, ry.mean_prediction_var(X, 0)));
        fr->reg_y[k] = std::move(ry);
        fr->reg_z[k] = std::move(rz);
    }
    if (sol.diag.degree_reductions > 0)
        sol.diag.warnings.push_back("regression design rank-deficient; basis degree reduced " +
                                    std::to_string(sol.diag.degree_reductions) + " time(s)");
    if (!sol.diag.converged) sol.diag.warnings.push_back("Picard iteration cap reached");
    sol.frozen = fr;
    return sol;
}

struct QuadraticConfig {
    BasisConfig basis{BasisKind::LocalAverage, 3, 32, 1e-10};
    FeatureMap features = FeatureMap::Markov;
    double scale = 1.0;          // generator (scale/2)|z|^2
    std::optional<double> cap;   // terminal replaced by min(F, cap)
};

// Exponential transform for g = (scale/2)|z|^2, m = 1:
// Y_t = log E[exp(scale F) | F_t] / scale.
inline BsdeSolution solve_quadratic_exponential(const ScalarTerminal& F, const TimeGrid& grid,
                                                const PathBundle& noise, QuadraticConfig cfg = {}) {
    if (!(cfg.scale > 0.0)) throw std::invalid_argument("solve_quadratic_exponential: scale must be positive");
    const int d = noise.dim;
    detail::check_noise(grid, noise, d, "solve_quadratic_exponential");
    const std::size_t n = noise.size();
    const double dt = grid.dt(), s = cfg.scale;
    const auto N = grid.steps;

    BsdeSolution sol;
    sol.m = 1;
    sol.d = d;
    if (cfg.basis.kind == BasisKind::LocalAverage && feature_count(cfg.features, d) != 1) {
        cfg.basis.kind = BasisKind::Polynomial;
        sol.diag.warnings.push_back("local-average basis needs one feature; switched to polynomial");
    }
    auto fr = std::make_shared<detail::QuadFrozen>();
    fr->F = F;
    fr->scale = s;
    fr->cap = cfg.cap;
    fr->features = cfg.features;
    fr->grid = grid;
    fr->d = d;
    fr->reg_m.resize(N);

    sol.Y = PathBundle{grid, 1, std::vector<Path>(n, Path(grid, 1)), noise.seed, {MeasureKind::Pushforward, "quadratic"}};
    sol.Z = PathBundle{grid, d, std::vector<Path>(n, Path(grid, d)), noise.seed, {MeasureKind::Pushforward, "quadratic:Z"}};
    sol.slice_se.assign(N + 1, 0.0);
    sol.diag.basis_size.assign(N, 0);
    sol.diag.picard_iterations.assign(N, 0);
    sol.diag.residual_rms.assign(N, 0.0);

    Eigen::MatrixXd E(n, 1);
    std::vector<double> term(n);
    parallel_for(n, [&](std::size_t i) { term[i] = fr->terminal(noise[i]); });
    double shift = *std::max_element(term.begin(), term.end());
    // exp(s (F - shift)) avoids overflow; the shift is added back after the log.
    for (std::size_t i = 0; i < n; ++i) {
        E(i, 0) = std::exp(s * (term[i] - shift));
        sol.Y[i](N, 0) = term[i];
    }
    Eigen::VectorXd Mnext = E.col(0);
    Eigen::MatrixXd ZT(n, d);
    for (std::int64_t k = N - 1; k >= 0; --k) {
        Eigen::MatrixXd X = slice_features(cfg.features, noise, k);
        Regressor rm = Regressor::fit(X, E, cfg.basis);
        Eigen::VectorXd M = rm.predict(X).col(0);
        for (std::size_t i = 0; i < n; ++i) {
            if (!(M[i] > 0.0))
                throw std::domain_error("solve_quadratic_exponential: conditional mean " + std::to_string(M[i]) +
                                        " <= 0 at path " + std::to_string(i) + ", step " + std::to_string(k));
            for (int j = 0; j < d; ++j) ZT(i, j) = (Mnext[i] - M[i]) * (noise[i](k + 1, j) - noise[i](k, j)) / dt;
        }
        Regressor rz = Regressor::fit(X, ZT, cfg.basis);
        Eigen::MatrixXd Zk = rz.predict(X);
        Eigen::VectorXd w(n);
        for (std::size_t i = 0; i < n; ++i) {
            sol.Y[i](k, 0) = std::log(M[i]) / s + shift;
            for (int j = 0; j < d; ++j) {
                sol.Z[i](k, j) = Zk(i, j) / (s * M[i]);
                if (k == N - 1) sol.Z[i](N, j) = sol.Z[i](k, j);
            }
            w[i] = 1.0 / (s * M[i] * static_cast<double>(n));
        }
        sol.slice_se[k] = std::sqrt(std::max(0.0, rm.weighted_prediction_var(X, w)));
        sol.diag.basis_size[k] = rm.basis_size();
        sol.diag.residual_rms[k] = rm.residual_rms()[0];
        sol.diag.degree_reductions += rm.degree_reductions() + rz.degree_reductions();
        Mnext = M;
        fr->reg_m[k] = std::move(rm);
    }
    fr->shift = shift;
    sol.frozen = fr;
    if (sol.diag.degree_reductions > 0) sol.diag.warnings.push_back("regression design rank-deficient; basis degree reduced");
    return sol;
}

// |Y0(cap) - Y0(2 cap)| for the truncated terminal min(F, cap).
struct CapSensitivity {
    double y0_cap = 0.0, y0_double = 0.0, delta = 0.0;
};

inline CapSensitivity quadratic_cap_sensitivity(const ScalarTerminal& F, const TimeGrid& grid, const PathBundle& noise,
                                                QuadraticConfig cfg, double cap) {
    cfg.cap = cap;
    double a = solve_quadratic_exponential(F, grid, noise, cfg).y0();
    cfg.cap = 2.0 * cap;
    double b = solve_quadratic_exponential(F, grid, noise, cfg).y0();
    return {a, b, std::abs(a - b)};
}

struct ConjugateConfig {
    double radius = 4.0;
    double max_radius = 1024.0;
    int lattice = 41;   // points per axis of the coarse lattice (d <= 2), else coordinate search only
    int sweeps = 60;
    double tol = 1e-12;
};

struct ConjugateResult {
    double value = 0.0;
    std::vector<double> argmax;
    double radius = 0.0;
    bool boundary_active = false;
};

// sup_z (q.z - g(z)) over a box that grows until the maximiser is interior.
inline ConjugateResult convex_conjugate(const std::function<double(std::span<const double>)>& g,
                                        std::span<const double> q, const ConjugateConfig& cfg = {}) {
    const int d = static_cast<int>(q.size());
    if (d < 1) throw std::invalid_argument("convex_conjugate: empty q");
    auto obj = [&](const std::vector<double>& z) {
        double s = 0.0;
        for (int j = 0; j < d; ++j) s += q[j] * z[j];
        return s - g(z);
    };
    ConjugateResult res;
    for (double R = cfg.radius;; R *= 4.0) {
        std::vector<double> z(d, 0.0), best_z(d, 0.0);
        double best = obj(z);
        if (d <= 2) {
            const int L = std::max(3, cfg.lattice);
            std::vector<int> idx(d, 0);
            while (true) {
                for (int j = 0; j < d; ++j) z[j] = -R + 2.0 * R * idx[j] / (L - 1);
                double v = obj(z);
                if (v > best) best = v, best_z = z;
                int j = 0;
                while (j < d && ++idx[j] == L) idx[j++] = 0;
                if (j == d) break;
            }
        }
        // Golden-section coordinate ascent inside the box.
        z = best_z;
        const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
        for (int sweep = 0; sweep < cfg.sweeps; ++sweep) {
            double before = best;
            for (int j = 0; j < d; ++j) {
                double a = -R, b = R;
                if (d <= 2) {
                    double h = 2.0 * R / (std::max(3, cfg.lattice) - 1) * (sweep == 0 ? 1.0 : 0.5);
                    a = std::max(-R, z[j] - h);
                    b = std::min(R, z[j] + h);
                    if (sweep > 0) a = -R, b = R;
                }
                auto at = [&](double x) {
                    double keep = z[j];
                    z[j] = x;
                    double v = obj(z);
                    z[j] = keep;
                    return v;
                };
                double c = b - phi * (b - a), e = a + phi * (b - a);
                double fc = at(c), fe = at(e);
                for (int it = 0; it < 200 && b - a > 1e-13 * (1.0 + R); ++it) {
                    if (fc > fe) b = e, e = c, fe = fc, c = b - phi * (b - a), fc = at(c);
                    else a = c, c = e, fc = fe, e = a + phi * (b - a), fe = at(e);
                }
                double xs = 0.5 * (a + b), v = at(xs);
                for (double cand : {-R, R}) {
                    double vc = at(cand);
                    if (vc > v) v = vc, xs = cand;
                }
                if (v > best) best = v, z[j] = xs;
            }
            if (best - before <= cfg.tol * (1.0 + std::abs(best))) break;
        }
        res.value = best;
        res.argmax = z;
        res.radius = R;
        double zmax = 0.0;
        for (double v : z) zmax = std::max(zmax, std::abs(v));
        res.boundary_active = zmax > 0.9 * R;
        if (!res.boundary_active || R * 4.0 > cfg.max_radius) return res;
    }
}

struct DualBound {
    double value = 0.0, se = 0.0;
    double terminal_mean = 0.0, penalty_mean = 0.0;
    bool conjugate_flagged = false;
    std::string tilt;
};

// Monte-Carlo estimate of E_Q[F - int g*(q) dt] under the tilted measure Q.
inline DualBound dual_lower_bound(const BsdeModel& model, const GirsanovTilt& q, const TimeGrid& grid,
                                  std::size_t n_mc, std::uint64_t seed) {
    const auto& meta = model.gen.meta;
    if (meta.cls != GeneratorClass::QuadraticConvex && meta.cls != GeneratorClass::Linear && !meta.z_only)
        throw std::invalid_argument("dual_lower_bound: generator must be a convex function of z");
    if (!meta.conjugate && !meta.z_only) throw std::invalid_argument("dual_lower_bound: generator has no z-form");
    if (!q.bound) throw std::invalid_argument("dual_lower_bound: tilt must be bounded");
    if (q.dim != model.d) throw std::invalid_argument("dual_lower_bound: tilt dimension differs from model d");
    if (n_mc < 2) throw std::invalid_argument("dual_lower_bound: n_mc must be >= 2");
    const double dt = grid.dt();
    auto paths = sample_tilted_brownian(grid, q, n_mc, seed);
    std::vector<double> Fv(n_mc), Pv(n_mc);
    std::vector<char> flag(n_mc, 0);
    auto conj = [&](std::span<const double> qk, char& fl) {
        if (meta.conjugate) return meta.conjugate(qk);
        auto r = convex_conjugate(meta.z_only, qk);
        if (r.boundary_active) fl = 1;
        return r.value;
    };
    std::vector<double> det_pen;
    if (q.kind == TiltKind::Deterministic) {
        Path zero(grid, q.dim);
        std::vector<double> qk(q.dim);
        double pen = 0.0;
        char fl = 0;
        for (std::int64_t k = 0; k < grid.steps; ++k) {
            q.eval(PathView(zero, k), qk);
            pen += conj(qk, fl) * dt;
        }
        det_pen.push_back(pen);
        if (fl) std::fill(flag.begin(), flag.end(), 1);
    }
    parallel_for(n_mc, [&](std::size_t i) {
        std::vector<double> out(model.m), qk(q.dim);
        model.F(paths[i], out);
        Fv[i] = out[0];
        if (!det_pen.empty()) {
            Pv[i] = det_pen[0];
            return;
        }
        double pen = 0.0;
        for (std::int64_t k = 0; k < grid.steps; ++k) {
            q.eval(PathView(paths[i], k), qk);
            pen += conj(qk, flag[i]) * dt;
        }
        Pv[i] = pen;
    });
    DualBound r;
    r.tilt = q.label;
    const double nn = static_cast<double>(n_mc);
    r.terminal_mean = std::accumulate(Fv.begin(), Fv.end(), 0.0) / nn;
    r.penalty_mean = std::accumulate(Pv.begin(), Pv.end(), 0.0) / nn;
    r.value = r.terminal_mean - r.penalty_mean;
    double var = 0.0;
    for (std::size_t i = 0; i < n_mc; ++i) {
        double v = Fv[i] - Pv[i] - r.value;
        var += v * v;
    }
    r.se = std::sqrt(var / (nn - 1.0) / nn);
    r.conjugate_flagged = std::any_of(flag.begin(), flag.end(), [](char c) { return c != 0; });
    return r;
}

// Metadata for the constant formulas. Fields left empty make the dependent
// constants absent from the result.
struct BsdeConstantInputs {
    std::optional<double> T, L_F, L_g;
    std::optional<int> m, d;
    std::optional<double> L_alpha, beta, gamma;   // linear generator alpha + beta y + gamma z
    std::optional<double> rho_Q;                  // appears undefined in the arbitrary-growth constant
    std::optional<double> phi_Lambda;             // phi evaluated at Lambda
    std::optional<double> L_Gamma;                // obstacle Lipschitz constant
};

struct BsdeConstants {
    std::optional<double> C_y_multi, C_y_1d, L_Y, L_Y_corollary, z_bound, C_z_quartic, C_z_quartic_proof, Lambda,
        C_y_growth, C_z_growth, C_z_linear, L_G, C_yz, lsi_multi, lsi_1d, C_s, C_stop_bsde, C_stop_bsde_corollary;
    std::optional<bool> small_T_ok;
    std::vector<std::string> warnings;

    nlohmann::json to_json() const {
        nlohmann::json j = nlohmann::json::object();
        auto put = [&](const char* k, const auto& v) {
            if (v) j[k] = *v;
        };
        put("C_y_multi", C_y_multi);
        put("C_y_1d", C_y_1d);
        put("L_Y", L_Y);
        put("L_Y_corollary", L_Y_corollary);
        put("z_bound", z_bound);
        put("C_z_quartic", C_z_quartic);
        put("C_z_quartic_proof", C_z_quartic_proof);
        put("Lambda", Lambda);
        put("C_y_growth", C_y_growth);
        put("C_z_growth", C_z_growth);
        put("small_T_ok", small_T_ok);
        put("L_G", L_G);
        put("C_z_linear", C_z_linear);
        put("C_yz", C_yz);
        put("lsi_multi", lsi_multi);
        put("lsi_1d", lsi_1d);
        put("C_s", C_s);
        put("C_stop_bsde", C_stop_bsde);
        put("C_stop_bsde_corollary", C_stop_bsde_corollary);
        if (!warnings.empty()) j["warnings"] = warnings;
        return j;
    }
};

inline BsdeConstants compute_bsde_constants(const BsdeConstantInputs& in) {
    BsdeConstants c;
    if (!in.L_F && !in.L_Gamma) throw std::invalid_argument("bsde constants: missing metadata fields: L_F (or L_Gamma)");
    if (in.L_Gamma) c.C_s = 2.0 * *in.L_Gamma * *in.L_Gamma;
    if (!in.L_F) return c;
    const double LF = *in.L_F;
    c.C_y_1d = 2.0 * LF * LF;
    if (in.T) c.lsi_1d = *in.T * *c.C_y_1d;
    if (in.L_g && in.T) {
        const double Lg = *in.L_g, T = *in.T;
        c.C_y_multi = 2.0 * (LF + T * Lg) * (LF + T * Lg) * std::exp(2.0 * T * Lg);
        c.L_Y = (LF + T * Lg) * std::exp(T * Lg);
        c.L_Y_corollary = LF + T * Lg * std::exp(T * Lg);
        c.lsi_multi = T * *c.C_y_multi;
        if (in.L_Gamma) {
            c.C_stop_bsde = 2.0 * std::pow(*in.L_Gamma * *c.L_Y, 2);
            c.C_stop_bsde_corollary = 2.0 * std::pow(*in.L_Gamma * *c.L_Y_corollary, 2);
        }
        if (in.m) {
            const double m = *in.m;
            c.z_bound = m * LF * LF * std::exp((2.0 * Lg + Lg * Lg + 1.0) * T) + m * Lg * Lg * T;
            double inner = m * LF * LF * std::exp((Lg + 1.0) * (Lg + 1.0) * T) + m * Lg * Lg * T;
            c.C_z_quartic = 2.0 * std::pow(1.0 + std::pow(inner, 4), 0.25);
            double inner_p = m * LF * LF * std::exp((2.0 * Lg + Lg * Lg + 1.0) * T) + m * Lg * Lg * T;
            c.C_z_quartic_proof = 2.0 * std::pow(1.0 + std::pow(inner_p, 4), 0.25);
            if (in.d) {
                c.Lambda = std::sqrt(2.0 * *in.d * m * (LF * LF + T * Lg * Lg));
                if (in.phi_Lambda) {
                    const double ph = *in.phi_Lambda, Lm = std::max(Lg, ph);
                    c.small_T_ok = T <= std::log(2.0) / (2.0 * Lg + ph * ph + 1.0);
                    c.C_z_growth = 2.0 * std::pow(
                                             1.0 + std::pow(m * LF * LF * std::exp((Lm + 1.0) * (Lm + 1.0) * T) +
                                                                m * T * Lm * Lm,
                                                            4),
                                             0.25);
                    if (in.rho_Q) {
                        double a = LF + T * std::max(Lg, *in.rho_Q);
                        c.C_y_growth = 2.0 * a * a * std::exp(2.0 * T * Lm);
                        c.warnings.push_back("C_y_growth uses the user-supplied rho(Q); its definition is not given with the formula");
                    } else {
                        c.warnings.push_back("C_y_growth absent: rho(Q) is a required input with no definition to derive it from");
                    }
                }
            }
        }
    }
    if (in.T && (in.L_alpha || in.beta || in.gamma)) {
        const double T = *in.T;
        double LG = std::max({in.L_alpha.value_or(0.0), std::abs(in.beta.value_or(0.0)), std::abs(in.gamma.value_or(0.0))});
        c.L_G = LG;
        c.C_z_linear = 2.0 * (LF + T * LG) * (LF + T * LG) * std::exp(2.0 * T * LG);
        if (c.C_y_multi) c.C_yz = std::max(*c.C_y_multi, *c.C_z_linear);
    }
    return c;
}

inline BsdeConstants bsde_constants(const BsdeModel& model, double T) {
    const auto& meta = model.gen.meta;
    BsdeConstantInputs in;
    in.T = T;
    in.L_F = model.L_F;
    in.m = model.m;
    in.d = model.d;
    if (meta.cls != GeneratorClass::QuadraticConvex) in.L_g = meta.L_g;
    if (meta.linear) {
        in.L_alpha = meta.linear->L_alpha;
        in.beta = meta.linear->beta;
        in.gamma = std::sqrt(norm2(meta.linear->gamma));
    }
    auto c = compute_bsde_constants(in);
    if (meta.cls == GeneratorClass::QuadraticConvex) {
        c.C_y_multi.reset();
        c.lsi_multi.reset();
    }
    return c;
}

struct ZBoundReport {
    double max_z2 = 0.0;
    double bound = 0.0;
    double slack = 0.05;
    bool pass = false;
    std::size_t worst_path = 0;
    std::int64_t worst_step = 0;

    nlohmann::json to_json() const {
        return {{"max_z2", max_z2}, {"bound", bound}, {"slack", slack}, {"pass", pass},
                {"worst_path", worst_path}, {"worst_step", worst_step}};
    }
};

inline ZBoundReport z_bound_check(const BsdeSolution& sol, const BsdeModel& model, double slack = 0.05) {
    if (model.gen.meta.cls == GeneratorClass::QuadraticConvex)
        throw std::invalid_argument("z_bound_check: generator class must be Lipschitz or Linear");
    const auto& grid = sol.Z.grid;
    auto c = bsde_constants(model, grid.horizon);
    ZBoundReport r;
    r.bound = *c.z_bound;
    r.slack = slack;
    for (std::size_t i = 0; i < sol.Z.size(); ++i)
        for (std::int64_t k = 0; k < grid.steps; ++k) {
            double s = 0.0;
            for (double v : sol.Z[i].row(k)) s += v * v;
            if (s > r.max_z2) r.max_z2 = s, r.worst_path = i, r.worst_step = k;
        }
    r.pass = r.max_z2 <= r.bound * (1.0 + slack) + 1e-12;
    return r;
}

struct LipschitzProbe {
    double max_ratio = 0.0;
    std::vector<double> ratios;   // per bump; NaN for skipped zero-norm bumps
    std::size_t skipped = 0;

    nlohmann::json to_json() const {
        nlohmann::json rs = nlohmann::json::array();
        for (double v : ratios) rs.push_back(std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v));
        return {{"max_ratio", max_ratio}, {"ratios", rs}, {"skipped", skipped}};
    }
};

// max over paths and bumps of |P(w + h) - P(w)|_inf / |h|_inf, re-running the
// process on each bumped bundle.
inline LipschitzProbe pathwise_lipschitz_probe(const PathMap& process, const std::vector<Path>& bumps,
                                               const PathBundle& noise) {
    LipschitzProbe r;
    PathBundle base = process(noise);
    for (const auto& h : bumps) {
        double hn = sup_norm(h);
        if (!(hn > 0.0)) {
            r.ratios.push_back(std::numeric_limits<double>::quiet_NaN());
            ++r.skipped;
            continue;
        }
        PathBundle bumped = noise;
        for (auto& p : bumped.paths) p = add_bump(p, h);
        PathBundle out = process(bumped);
        double worst = 0.0;
        for (std::size_t i = 0; i < base.size(); ++i) worst = std::max(worst, sup_distance(out[i], base[i]));
        r.ratios.push_back(worst / hn);
        r.max_ratio = std::max(r.max_ratio, worst / hn);
    }
    return r;
}

// Deterministic bump family: Cameron-Martin ramps and sines plus bounded
// non-absolutely-continuous steps, all with nonzero sup norm.
inline std::vector<Path> standard_bumps(const TimeGrid& grid, int d, int count, std::uint64_t seed) {
    std::vector<Path> out;
    auto rng = stream_for(seed, 0xb0);
    std::uniform_real_distribution<double> amp(-1.0, 1.0), freq(0.5, 4.0), cut(0.1, 0.9);
    const double T = grid.horizon;
    for (int b = 0; b < count; ++b) {
        Path h(grid, d);
        int kind = b % 4;
        std::vector<double> a(d), f(d), c(d);
        for (int j = 0; j < d; ++j) a[j] = amp(rng), f[j] = freq(rng), c[j] = cut(rng) * T;
        for (std::int64_t k = 0; k < static_cast<std::int64_t>(grid.size()); ++k) {
            double t = grid.time(k);
            for (int j = 0; j < d; ++j) {
                double v = 0.0;
                if (kind == 0) v = a[j] * t / T;
                else if (kind == 1) v = a[j] * std::sin(f[j] * 3.14159265358979323846 * t / T);
                else if (kind == 2) v = a[j] * (t >= c[j] ? 1.0 : 0.0);
                else v = a[j];
                h(k, j) = v;
            }
        }
        if (sup_norm(h) == 0.0) h(grid.steps, 0) = 0.5;
        out.push_back(std::move(h));
    }
    return out;
}

inline nlohmann::json solution_summary(const BsdeSolution& s) {
    return {{"m", s.m}, {"d", s.d}, {"n_paths", s.Y.size()}, {"y0", s.y0()},
            {"y0_se", s.slice_se.empty() ? 0.0 : s.slice_se[0]}, {"diagnostics", s.diag.to_json()}};
}

}  // namespace pathineq
