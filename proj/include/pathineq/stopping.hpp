#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "bsdesolve.hpp"
#include "parallel.hpp"
#include "pathcore.hpp"
#include "random.hpp"
#include "regression.hpp"

namespace pathineq {

struct ObstacleProcess {
    // Reads the path only up to the view's current index.
    std::function<double(double, const PathView&)> gamma;
    double L_Gamma = 0.0;
    bool markov = true;   // depends on the current value only
    std::string label;

    double at(const Path& p, std::int64_t k) const { return gamma(p.grid().time(k), PathView(p, k)); }
};

// Spot check |Gamma_t(w) - Gamma_t(v)| <= L_Gamma |w - v|_{[0,t]} on Brownian pairs.
inline void validate_obstacle(const ObstacleProcess& ob, const TimeGrid& grid, int d, std::uint64_t seed = 9,
                              int n_probe = 64) {
    if (!ob.gamma) throw std::invalid_argument("ObstacleProcess: gamma is required");
    if (ob.L_Gamma < 0.0) throw std::invalid_argument("ObstacleProcess: L_Gamma must be >= 0");
    auto paths = sample_brownian(grid, d, 16, derive_seed(seed, 3));
    auto rng = stream_for(seed, 0x0b);
    std::uniform_int_distribution<int> pick(0, 15);
    std::uniform_int_distribution<std::int64_t> kpick(0, grid.steps);
    for (int r = 0; r < n_probe; ++r) {
        const Path& a = paths[pick(rng)];
        const Path& b = paths[pick(rng)];
        std::int64_t k = kpick(rng);
        double dist = 0.0;
        for (std::int64_t s = 0; s <= k; ++s) {
            double q = 0.0;
            for (int j = 0; j < d; ++j) q += (a(s, j) - b(s, j)) * (a(s, j) - b(s, j));
            dist = std::max(dist, std::sqrt(q));
        }
        if (std::abs(ob.at(a, k) - ob.at(b, k)) > ob.L_Gamma * dist * (1.0 + 1e-9) + 1e-12)
            throw std::invalid_argument("ObstacleProcess '" + ob.label + "': violates the declared L_Gamma on a probe");
    }
}

inline ObstacleProcess martingale_obstacle() {
    return {[](double, const PathView& w) { return w.current()[0]; }, 1.0, true, "martingale"};
}

// exp(-r t) max(K - w(t), 0); with r = 0 early exercise never helps (convex
// payoff of a martingale).
inline ObstacleProcess put_obstacle(double K, double r = 0.0) {
    if (r < 0.0) throw std::invalid_argument("put_obstacle: rate must be >= 0");
    return {[K, r](double t, const PathView& w) { return std::exp(-r * t) * std::max(K - w.current()[0], 0.0); },
            1.0, true, "put(K=" + std::to_string(K) + ",r=" + std::to_string(r) + ")"};
}

inline ObstacleProcess constant_obstacle(double c) {
    return {[c](double, const PathView&) { return c; }, 0.0, true, "constant"};
}

// Running maximum of the first coordinate: adapted, 1-Lipschitz, not Markov.
inline ObstacleProcess running_max_obstacle() {
    return {[](double, const PathView& w) {
                double m = -std::numeric_limits<double>::infinity();
                for (std::size_t k = 0; k <= w.last(); ++k) m = std::max(m, w.at(k)[0]);
                return m;
            },
            1.0, false, "running_max"};
}

// Realized: Longstaff-Schwartz, continuation fitted to cash flows carried along
// each path's exercise decisions. Fitted: continuation fitted to S_{k+1}; with a
// local-average basis each S_k is a max of Gamma_k and a convex combination of
// S_{k+1} values.
enum class SnellCarry { Realized, Fitted };

struct SnellConfig {
    BasisConfig basis;
    std::optional<FeatureMap> features;   // default: Markov for Markov obstacles, else Extrema
    SnellCarry carry = SnellCarry::Realized;
    // Paths for evaluating the exercise rule; Brownian inputs get a fresh sample by default.
    std::optional<PathBundle> eval_paths;
};

struct SnellSolution {
    PathBundle S;
    std::vector<std::vector<char>> exercise;   // [path][k]
    std::vector<std::int64_t> stop_index;      // first exercise index per path
    double value0 = 0.0, se0 = 0.0;            // estimate of S_0 and its standard error
    double value0_in_sample = 0.0;
    bool out_of_sample = false;
    std::vector<double> continuation_se;       // SE of slice-mean continuation values
    std::vector<double> continuation_sd;       // RMS over paths of the pointwise continuation SE
    FeatureMap features = FeatureMap::Markov;
    int degree_reductions = 0;
    std::vector<std::string> warnings;
    std::shared_ptr<const FrozenBsde> frozen;

    PathBundle evaluate(const PathBundle& w) const {
        if (!frozen) throw std::logic_error("SnellSolution: no fitted map");
        PathBundle out{w.grid, 1, std::vector<Path>(w.size()), w.seed, {MeasureKind::Pushforward, S.tag.label}};
        parallel_for(w.size(), [&](std::size_t i) { out.paths[i] = frozen->evaluate(w.paths[i]); });
        return out;
    }
    PathMap as_map() const {
        SnellSolution light;
        light.S.tag = S.tag;
        light.frozen = frozen;
        return [light](const PathBundle& w) { return light.evaluate(w); };
    }

    void write_exercise_csv(const std::string& file) const {
        std::ofstream o(file);
        if (!o) throw std::runtime_error("cannot open " + file);
        o << "path,stop_index,stop_time\n";
        for (std::size_t i = 0; i < stop_index.size(); ++i)
            o << i << ',' << stop_index[i] << ',' << S.grid.time(stop_index[i]) << '\n';
    }

    nlohmann::json to_json() const {
        return {{"value0", value0}, {"se0", se0}, {"value0_in_sample", value0_in_sample},
                {"out_of_sample", out_of_sample}, {"n_paths", S.size()}, {"degree_reductions", degree_reductions},
                {"warnings", warnings}};
    }
};

namespace detail {

struct SnellFrozen final : FrozenBsde {
    ObstacleProcess ob;
    FeatureMap features = FeatureMap::Markov;
    TimeGrid grid;
    std::vector<Regressor> cont;

    Path evaluate(const Path& w) const override {
        Path S(grid, 1);
        S(grid.steps, 0) = ob.at(w, grid.steps);
        std::vector<double> x(feature_count(features, w.dim()));
        for (std::int64_t k = 0; k < grid.steps; ++k) {
            extract_features(features, w, k, x.data());
            S(k, 0) = std::max(ob.at(w, k), cont[k].predict1(x.data()));
        }
        return S;
    }
};

}  // namespace detail

inline SnellSolution snell_envelope_lsmc(const ObstacleProcess& ob, const TimeGrid& grid, const PathBundle& noise,
                                         const SnellConfig& cfg = {}) {
    noise.validate();
    if (!(noise.grid == grid)) throw std::invalid_argument("snell_envelope_lsmc: noise grid differs from solver grid");
    if (noise.size() < 2) throw std::invalid_argument("snell_envelope_lsmc: need at least two paths");
    const std::size_t n = noise.size();
    const auto N = grid.steps;
    SnellSolution sol;
    sol.features = cfg.features.value_or(ob.markov ? FeatureMap::Markov : FeatureMap::Extrema);
    BasisConfig basis = cfg.basis;
    if (basis.kind == BasisKind::LocalAverage && feature_count(sol.features, noise.dim) != 1) {
        basis.kind = BasisKind::Polynomial;
        sol.warnings.push_back("local-average basis needs one feature; switched to polynomial");
    }
    if (!ob.markov && sol.features == FeatureMap::Markov)
        sol.warnings.push_back("non-Markov obstacle regressed on the current state only");

    auto fr = std::make_shared<detail::SnellFrozen>();
    fr->ob = ob;
    fr->features = sol.features;
    fr->grid = grid;
    fr->cont.resize(N);

    sol.S = PathBundle{grid, 1, std::vector<Path>(n, Path(grid, 1)), noise.seed, {MeasureKind::Pushforward, "snell:" + ob.label}};
    sol.exercise.assign(n, std::vector<char>(N + 1, 0));
    sol.stop_index.assign(n, N);
    sol.continuation_se.assign(N, 0.0);
    sol.continuation_sd.assign(N, 0.0);

    Eigen::MatrixXd G(n, N + 1);
    parallel_for(n, [&](std::size_t i) {
        for (std::int64_t k = 0; k <= N; ++k) G(i, k) = ob.at(noise[i], k);
    });
    Eigen::MatrixXd V(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
        V(i, 0) = G(i, N);
        sol.S[i](N, 0) = G(i, N);
        sol.exercise[i][N] = 1;
    }
    Eigen::MatrixXd target(n, 1);
    for (std::int64_t k = N - 1; k >= 0; --k) {
        Eigen::MatrixXd X = slice_features(sol.features, noise, k);
        for (std::size_t i = 0; i < n; ++i)
            target(i, 0) = cfg.carry == SnellCarry::Realized ? V(i, 0) : sol.S[i](k + 1, 0);
        Regressor reg = Regressor::fit(X, target, basis);
        Eigen::MatrixXd C = reg.predict(X);
        for (std::size_t i = 0; i < n; ++i) {
            bool ex = G(i, k) >= C(i, 0);
            sol.exercise[i][k] = ex ? 1 : 0;
            sol.S[i](k, 0) = std::max(G(i, k), C(i, 0));
            if (ex) {
                V(i, 0) = G(i, k);
                sol.stop_index[i] = k;
            }
        }
        sol.continuation_se[k] = std::sqrt(std::max(0.0, reg.mean_prediction_var(X)));
        double pv = 0.0;
        for (std::size_t i = 0; i < n; ++i) pv += reg.prediction_var(&X(i, 0));
        sol.continuation_sd[k] = std::sqrt(pv / static_cast<double>(n));
        sol.degree_reductions += reg.degree_reductions();
        fr->cont[k] = std::move(reg);
    }
    const double nn = static_cast<double>(n);
    if (cfg.carry == SnellCarry::Realized) {
        double m = V.col(0).mean();
        sol.value0_in_sample = m;
        // The fitted exercise rule is applied to independent paths, so value0 is
        // an unbiased estimate of that rule's value (a lower bound on S_0).
        // Without an independent sample the in-sample mean is reported.
        std::optional<PathBundle> fresh;
        if (cfg.eval_paths) fresh = *cfg.eval_paths;
        else if (noise.tag.kind == MeasureKind::Wiener)
            fresh = sample_brownian(grid, noise.dim, n, derive_seed(noise.seed, 0x5e11));
        if (fresh) {
            const std::size_t ne = fresh->size();
            std::vector<double> val(ne);
            parallel_for(ne, [&](std::size_t i) {
                const Path& w = (*fresh)[i];
                std::vector<double> x(feature_count(sol.features, w.dim()));
                std::int64_t k = 0;
                for (; k < N; ++k) {
                    extract_features(sol.features, w, k, x.data());
                    if (ob.at(w, k) >= fr->cont[k].predict1(x.data())) break;
                }
                val[i] = ob.at(w, k);
            });
            const double ne_d = static_cast<double>(ne);
            double mm = std::accumulate(val.begin(), val.end(), 0.0) / ne_d, var = 0.0;
            for (double v : val) var += (v - mm) * (v - mm);
            sol.value0 = mm;
            sol.se0 = std::sqrt(var / (ne_d - 1.0) / ne_d);
            sol.out_of_sample = true;
        } else {
            double var = (V.col(0).array() - m).square().sum() / (nn - 1.0);
            sol.value0 = m;
            sol.se0 = std::sqrt(var / nn);
            sol.warnings.push_back("value0 is an in-sample estimate");
        }
    } else {
        sol.value0 = sol.S[0](0, 0);
        sol.value0_in_sample = sol.value0;
        sol.se0 = sol.continuation_se[0];
    }
    if (sol.degree_reductions > 0) sol.warnings.push_back("regression design rank-deficient; basis degree reduced");
    sol.frozen = fr;
    return sol;
}

struct TreeConfig {
    double horizon = 1.0;
    std::int64_t steps = 2000;        // binomial steps
    std::int64_t exercise_every = 1;  // exercise allowed at multiples of this step count
    double x0 = 0.0;
};

// Backward induction on the recombining walk x0 + sqrt(dt) (2j - k), p = 1/2.
inline double snell_envelope_tree(const std::function<double(double, double)>& payoff, const TreeConfig& cfg) {
    if (cfg.steps < 1 || cfg.exercise_every < 1 || cfg.steps % cfg.exercise_every != 0)
        throw std::invalid_argument("snell_envelope_tree: steps must be a positive multiple of exercise_every");
    const double dt = cfg.horizon / static_cast<double>(cfg.steps), sdt = std::sqrt(dt);
    const auto M = cfg.steps;
    std::vector<double> v(M + 1);
    for (std::int64_t j = 0; j <= M; ++j) v[j] = payoff(cfg.horizon, cfg.x0 + sdt * static_cast<double>(2 * j - M));
    for (std::int64_t k = M - 1; k >= 0; --k) {
        const double t = dt * static_cast<double>(k);
        const bool ex = k % cfg.exercise_every == 0;
        for (std::int64_t j = 0; j <= k; ++j) {
            double c = 0.5 * (v[j] + v[j + 1]);
            v[j] = ex ? std::max(c, payoff(t, cfg.x0 + sdt * static_cast<double>(2 * j - k))) : c;
        }
    }
    return v[0];
}

inline double stopping_constants(double L_Gamma) {
    if (!(L_Gamma >= 0.0)) throw std::invalid_argument("stopping_constants: L_Gamma must be >= 0");
    return 2.0 * L_Gamma * L_Gamma;
}

struct ComposedStopping {
    SnellSolution snell;
    BsdeSolution bsde;
    double C = 0.0;             // 2 (L_Gamma L_Y)^2 with the Lipschitz-lemma L_Y
    double C_corollary = 0.0;   // same with L_Y = L_F + T L_g e^{T L_g}
    double L_Y = 0.0, L_Y_corollary = 0.0;

    nlohmann::json to_json() const {
        return {{"C", C}, {"C_corollary", C_corollary}, {"L_Y", L_Y}, {"L_Y_corollary", L_Y_corollary},
                {"snell", snell.to_json()}, {"bsde", solution_summary(bsde)}};
    }
};

// Solves the BSDE, then the Snell envelope of Gamma(Y) with Y-paths as the state.
// Quadratic-class models use the exponential transform (m = 1, g = scale/2 |z|^2).
inline ComposedStopping compose_stopping_on_bsde(const BsdeModel& model, const ObstacleProcess& on_Y,
                                                 const TimeGrid& grid, const PathBundle& noise,
                                                 const LsmcConfig& bsde_cfg = {}, const SnellConfig& snell_cfg = {},
                                                 const QuadraticConfig& quad_cfg = {}) {
    ComposedStopping out;
    const double T = grid.horizon;
    if (model.gen.meta.cls == GeneratorClass::QuadraticConvex) {
        if (model.gen.meta.name != "quadratic")
            throw std::invalid_argument("compose_stopping_on_bsde: quadratic route needs the quadratic generator");
        TerminalFn F = model.F;
        out.bsde = solve_quadratic_exponential(
            [F](const Path& p) {
                double v = 0.0;
                F(p, std::span<double>(&v, 1));
                return v;
            },
            grid, noise, quad_cfg);
        out.L_Y = out.L_Y_corollary = model.L_F;
    } else {
        out.bsde = solve_bsde_lsmc(model, grid, noise, bsde_cfg);
        auto c = bsde_constants(model, T);
        out.L_Y = *c.L_Y;
        out.L_Y_corollary = *c.L_Y_corollary;
    }
    out.snell = snell_envelope_lsmc(on_Y, grid, out.bsde.Y, snell_cfg);
    out.C = 2.0 * std::pow(on_Y.L_Gamma * out.L_Y, 2);
    out.C_corollary = 2.0 * std::pow(on_Y.L_Gamma * out.L_Y_corollary, 2);
    return out;
}

}  // namespace pathineq
