#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <numeric>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "assignment.hpp"
#include "parallel.hpp"
#include "pathcore.hpp"
#include "random.hpp"
#include "transport.hpp"

namespace pathineq {

enum class Verdict { Pass, StatisticallyInconclusive, Fail };

inline const char* to_string(Verdict v) {
    switch (v) {
        case Verdict::Pass: return "pass";
        case Verdict::StatisticallyInconclusive: return "inconclusive";
        case Verdict::Fail: return "fail";
    }
    return "?";
}

inline Verdict worst(Verdict a, Verdict b) { return static_cast<int>(a) >= static_cast<int>(b) ? a : b; }

// PowerOfProduct: W_p <= (C H)^theta, the Talagrand form (theta = 1/2 gives T2(C)).
// ProductWithPower: W_p <= C H^theta, the form of the control-process inequality.
enum class RhsForm { PowerOfProduct, ProductWithPower };

struct TransportInequalitySpec {
    double C = 2.0;
    double theta = 0.5;
    double p = 2.0;
    RhsForm form = RhsForm::PowerOfProduct;
    std::string label = "T2";

    static TransportInequalitySpec t2(double C) { return {C, 0.5, 2.0, RhsForm::PowerOfProduct, "T2"}; }
    static TransportInequalitySpec z_inequality(double Cz) {
        return {Cz, 0.25, 2.0, RhsForm::ProductWithPower, "W2-H^1/4"};
    }

    void validate() const {
        if (!(C > 0.0) || !std::isfinite(C)) throw std::invalid_argument("TransportInequalitySpec: C must be > 0");
        if (!(theta > 0.0 && theta <= 1.0))
            throw std::invalid_argument("TransportInequalitySpec: theta must lie in (0, 1]");
        if (p != 2.0) throw std::invalid_argument("TransportInequalitySpec: only the quadratic cost p = 2 is supported");
    }
    double rhs(double H) const {
        H = std::max(H, 0.0);
        return form == RhsForm::PowerOfProduct ? std::pow(C * H, theta) : C * std::pow(H, theta);
    }
    double rhs_slope(double H) const {
        if (H <= 0.0) return 0.0;
        return theta * rhs(H) / H;
    }
    nlohmann::json to_json() const {
        return {{"C", C},
                {"theta", theta},
                {"p", p},
                {"form", form == RhsForm::PowerOfProduct ? "(C*H)^theta" : "C*H^theta"},
                {"label", label}};
    }
};

struct TiltRecord {
    std::string label;
    TiltShape shape = TiltShape::Zero;
    double entropy = 0.0;
    double entropy_se = 0.0;
    double raw_w2 = 0.0;
    double debiased_w2 = 0.0;
    double bootstrap_se = 0.0;
    double rhs = 0.0;
    double joint_se = 0.0;
    double margin = 0.0;
    Verdict verdict = Verdict::Pass;
};

inline const char* to_string(TiltShape s) {
    switch (s) {
        case TiltShape::Zero: return "zero";
        case TiltShape::Constant: return "constant";
        case TiltShape::TimeVarying: return "time-varying";
        case TiltShape::Adapted: return "adapted";
    }
    return "?";
}

struct VerifyConfig {
    std::size_t bootstrap = 20;
    double pass_se = 1.0;  // Pass: debiased <= RHS + pass_se * SE
    double fail_se = 3.0;  // Fail: debiased - fail_se * SE > RHS
    double abs_tol = 1e-9;
    std::string process_label = "process";
};

struct VerificationReport {
    TransportInequalitySpec spec;
    std::vector<TiltRecord> records;
    Verdict verdict = Verdict::Pass;
    std::uint64_t seed = 0;
    std::size_t n = 0;
    TimeGrid grid{};
    VerifyConfig config{};
    std::shared_ptr<const PathBundle> sample;  // process output under P

    static Verdict judge(double lhs, double rhs, double se, const VerifyConfig& cfg) {
        if (lhs <= rhs + cfg.pass_se * se + cfg.abs_tol) return Verdict::Pass;
        if (lhs - cfg.fail_se * se > rhs + cfg.abs_tol) return Verdict::Fail;
        return Verdict::StatisticallyInconclusive;
    }

    // Re-evaluates the right-hand sides and verdicts for another constant on the
    // same cached samples.
    VerificationReport with_spec(const TransportInequalitySpec& s) const {
        s.validate();
        VerificationReport r = *this;
        r.spec = s;
        r.verdict = Verdict::Pass;
        for (auto& t : r.records) {
            t.rhs = s.rhs(t.entropy);
            t.joint_se = std::hypot(t.bootstrap_se, s.rhs_slope(t.entropy) * t.entropy_se);
            t.margin = t.rhs - t.debiased_w2;
            t.verdict = judge(t.debiased_w2, t.rhs, t.joint_se, config);
            r.verdict = worst(r.verdict, t.verdict);
        }
        return r;
    }

    nlohmann::json to_json() const {
        nlohmann::json tilts = nlohmann::json::array();
        for (const auto& t : records)
            tilts.push_back({{"tilt", t.label},
                             {"shape", to_string(t.shape)},
                             {"entropy", t.entropy},
                             {"entropy_se", t.entropy_se},
                             {"raw_w2", t.raw_w2},
                             {"debiased_w2", t.debiased_w2},
                             {"bootstrap_se", t.bootstrap_se},
                             {"rhs", t.rhs},
                             {"joint_se", t.joint_se},
                             {"margin", t.margin},
                             {"verdict", to_string(t.verdict)}});
        return {{"inequality", spec.to_json()},
                {"process", config.process_label},
                {"seed", seed},
                {"n", n},
                {"horizon", grid.horizon},
                {"steps", grid.steps},
                {"bootstrap", config.bootstrap},
                {"tilts", tilts},
                {"verdict", to_string(verdict)}};
    }

    void write_csv(std::ostream& os) const {
        os << "tilt,shape,entropy,entropy_se,raw_w2,debiased_w2,bootstrap_se,rhs,margin,verdict\n";
        for (const auto& t : records)
            os << t.label << "," << to_string(t.shape) << "," << t.entropy << "," << t.entropy_se << "," << t.raw_w2
               << "," << t.debiased_w2 << "," << t.bootstrap_se << "," << t.rhs << "," << t.margin << ","
               << to_string(t.verdict) << "\n";
    }
};

// Zero, constant, time-varying (ramp and sine) and adapted drifts.
inline std::vector<GirsanovTilt> standard_tilt_battery(int d, double horizon = 1.0) {
    const double sd = std::sqrt(static_cast<double>(d));
    std::vector<GirsanovTilt> out;
    out.push_back(GirsanovTilt::zero(d));
    out.push_back(GirsanovTilt::constant(std::vector<double>(d, 1.0), "constant-1"));
    out.push_back(GirsanovTilt::deterministic(
        d, [](double t, std::span<double> o) { std::fill(o.begin(), o.end(), 2.0 * t); }, 2.0 * horizon * sd,
        "ramp-2t"));
    out.push_back(GirsanovTilt::deterministic(
        d,
        [](double t, std::span<double> o) { std::fill(o.begin(), o.end(), 1.5 * std::sin(2.0 * std::numbers::pi * t)); },
        1.5 * sd, "sine-1.5"));
    out.push_back(GirsanovTilt::adapted(
        d,
        [](double, const PathView& w, std::span<double> o) {
            auto x = w.current();
            for (std::size_t j = 0; j < o.size(); ++j) o[j] = -0.8 * std::tanh(x[j]);
        },
        0.8 * sd, "adapted-tanh"));
    return out;
}

namespace detail {
inline double assignment_w2(const Eigen::MatrixXd& C) {
    return std::sqrt(std::max(solve_assignment(C).cost, 0.0) / static_cast<double>(C.rows()));
}
}  // namespace detail

// Samples the process under P and under each tilted measure with common random
// numbers, then compares the exact W2 of the two empirical laws with the
// entropy side. Debiasing is the bootstrap bias correction 2 W - mean(W*),
// resampling path indices jointly in both samples.
inline VerificationReport verify_transport_inequality(const PathMap& process, const std::vector<GirsanovTilt>& tilts,
                                                      const TransportInequalitySpec& spec, const TimeGrid& grid,
                                                      std::size_t n, std::uint64_t seed,
                                                      const VerifyConfig& cfg = {}) {
    spec.validate();
    if (tilts.empty()) throw std::invalid_argument("verify_transport_inequality: empty tilt battery");
    if (n < 2) throw std::invalid_argument("verify_transport_inequality: n must be >= 2");
    const int d = tilts.front().dim;
    for (const auto& q : tilts)
        if (q.dim != d) throw std::invalid_argument("verify_transport_inequality: tilts disagree on dimension");

    PathBundle base = process(sample_brownian(grid, d, n, seed));
    base.validate();
    if (base.size() != n) throw std::invalid_argument("verify_transport_inequality: process changed the sample size");
    const auto mu = EmpiricalMeasure::from_bundle(base);

    VerificationReport rep;
    rep.spec = spec;
    rep.seed = seed;
    rep.n = n;
    rep.grid = grid;
    rep.config = cfg;
    rep.records.resize(tilts.size());
    rep.sample = std::make_shared<const PathBundle>(base);

    parallel_for(tilts.size(), [&](std::size_t t) {
        const auto& q = tilts[t];
        TiltRecord r;
        r.label = q.label;
        r.shape = q.shape;
        auto H = girsanov_entropy(q, grid, n, seed);
        r.entropy = H.value;
        r.entropy_se = H.se;
        if (q.shape != TiltShape::Zero && !(H.value > 0.0))
            throw std::domain_error("verify_transport_inequality: tilt '" + q.label +
                                    "' has zero entropy on the grid (quadrature failure)");
        PathBundle tilted = process(sample_tilted_brownian(grid, q, n, seed));
        tilted.validate();
        const auto nu = EmpiricalMeasure::from_bundle(tilted);
        const Eigen::MatrixXd C = cost_matrix(mu, nu, 2.0);
        r.raw_w2 = detail::assignment_w2(C);

        std::vector<double> boot(cfg.bootstrap);
        auto rng = stream_for(derive_seed(seed, 0xb007), t);
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        Eigen::MatrixXd Cb(n, n);
        std::vector<std::size_t> idx(n);
        for (std::size_t b = 0; b < cfg.bootstrap; ++b) {
            for (auto& i : idx) i = pick(rng);
            for (std::size_t a = 0; a < n; ++a)
                for (std::size_t c = 0; c < n; ++c) Cb(a, c) = C(idx[a], idx[c]);
            boot[b] = detail::assignment_w2(Cb);
        }
        double bm = r.raw_w2, bsd = 0.0;
        if (cfg.bootstrap >= 2) {
            bm = std::accumulate(boot.begin(), boot.end(), 0.0) / boot.size();
            for (double v : boot) bsd += (v - bm) * (v - bm);
            bsd = std::sqrt(bsd / (boot.size() - 1));
        }
        r.debiased_w2 = std::max(0.0, 2.0 * r.raw_w2 - bm);
        r.bootstrap_se = bsd;
        rep.records[t] = r;
    });
    return rep.with_spec(spec);
}

struct TailFitConfig {
    std::size_t min_hits = 5;
    std::size_t min_points = 3;
    double r2_min = 0.8;
    double min_slope_ratio = 0.5;  // 0 disables the flattening check
};

// Empirical two-sided tail of centred values and a least-squares fit of
// log(tail / 2) = b - c s, where s = x^2 times a scale (1, or N for empirical
// measures). Points enter the fit when x > 0, the hit count is at least
// min_hits, and the tail is below 1.
struct TailReport {
    std::vector<double> x, s, tail;
    std::vector<std::size_t> hits;
    std::vector<char> used;
    double scale = 1.0;
    double c = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
    double slope_ratio = std::numeric_limits<double>::quiet_NaN();  // late-half slope / early-half slope
    std::size_t points_used = 0;
    bool degenerate = false;
    Verdict verdict = Verdict::StatisticallyInconclusive;
    std::string note;

    nlohmann::json to_json() const {
        nlohmann::json j = {{"scale", scale},
                            {"points_used", points_used},
                            {"r2", r2},
                            {"intercept", intercept},
                            {"slope_ratio", std::isfinite(slope_ratio) ? nlohmann::json(slope_ratio) : nlohmann::json()},
                            {"degenerate", degenerate},
                            {"verdict", to_string(verdict)},
                            {"note", note}};
        if (std::isfinite(c)) j["c"] = c;
        else j["c"] = nullptr;
        return j;
    }
    void write_csv(std::ostream& os) const {
        os << "x,scaled_x2,tail,hits,used\n";
        for (std::size_t i = 0; i < x.size(); ++i)
            os << x[i] << "," << s[i] << "," << tail[i] << "," << hits[i] << "," << int(used[i]) << "\n";
    }
};

inline TailReport fit_gaussian_tail(const std::vector<double>& dev, const std::vector<double>& x_grid, double scale,
                                    const TailFitConfig& cfg = {}) {
    if (dev.empty()) throw std::invalid_argument("fit_gaussian_tail: no samples");
    TailReport r;
    r.scale = scale;
    const double n = static_cast<double>(dev.size());
    double spread = 0.0;
    for (double v : dev) spread = std::max(spread, std::abs(v));
    for (double x : x_grid) {
        std::size_t h = 0;
        for (double v : dev)
            if (std::abs(v) >= x) ++h;
        double tl = h / n;
        r.x.push_back(x);
        r.s.push_back(x * x * scale);
        r.tail.push_back(tl);
        r.hits.push_back(h);
        r.used.push_back(x > 0.0 && h >= cfg.min_hits && tl < 1.0);
    }
    if (spread == 0.0) {
        r.degenerate = true;
        r.c = std::numeric_limits<double>::infinity();
        r.r2 = 1.0;
        r.verdict = Verdict::Pass;
        r.note = "no spread: every tail beyond 0 is empty";
        return r;
    }
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < r.x.size(); ++i)
        if (r.used[i]) {
            xs.push_back(r.s[i]);
            ys.push_back(std::log(r.tail[i] / 2.0));
        }
    r.points_used = xs.size();
    if (xs.size() < cfg.min_points) {
        r.c = std::numeric_limits<double>::quiet_NaN();
        r.r2 = std::numeric_limits<double>::quiet_NaN();
        r.verdict = Verdict::StatisticallyInconclusive;
        r.note = "fewer than " + std::to_string(cfg.min_points) + " tail points on the decaying range";
        return r;
    }
    auto fit = [&](std::size_t lo, std::size_t hi, double& slope, double& icpt, double& r2) {
        const double m = static_cast<double>(hi - lo);
        double mx = std::accumulate(xs.begin() + lo, xs.begin() + hi, 0.0) / m;
        double my = std::accumulate(ys.begin() + lo, ys.begin() + hi, 0.0) / m;
        double sxx = 0.0, sxy = 0.0, syy = 0.0;
        for (std::size_t i = lo; i < hi; ++i) {
            sxx += (xs[i] - mx) * (xs[i] - mx);
            sxy += (xs[i] - mx) * (ys[i] - my);
            syy += (ys[i] - my) * (ys[i] - my);
        }
        slope = sxx > 0.0 ? sxy / sxx : 0.0;
        icpt = my - slope * mx;
        r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 0.0;
    };
    double slope = 0.0;
    fit(0, xs.size(), slope, r.intercept, r.r2);
    r.c = -slope;
    if (xs.size() >= 4) {
        std::size_t h = xs.size() / 2;
        double s1, s2, tmp, tmp2;
        fit(0, h + (xs.size() % 2), s1, tmp, tmp2);
        fit(h, xs.size(), s2, tmp, tmp2);
        if (s1 < 0.0) r.slope_ratio = s2 / s1;
    }
    if (!(r.c > 0.0)) {
        r.verdict = Verdict::Fail;
        r.note = "log-tail does not decay in x^2";
    } else if (r.r2 < cfg.r2_min) {
        r.verdict = Verdict::Fail;
        r.note = "log-tail is not linear in x^2";
    } else if (cfg.min_slope_ratio > 0.0 && std::isfinite(r.slope_ratio) && r.slope_ratio < cfg.min_slope_ratio) {
        // a mixture of Gaussian scales flattens too, so this cannot refute a Gaussian bound
        r.verdict = Verdict::StatisticallyInconclusive;
        r.note = "log-tail flattens in x^2 (heavy tail or mixed scales)";
    } else {
        r.verdict = Verdict::Pass;
    }
    return r;
}

inline std::vector<double> linear_grid(double lo, double hi, std::size_t k) {
    std::vector<double> g(k);
    for (std::size_t i = 0; i < k; ++i) g[i] = k == 1 ? lo : lo + (hi - lo) * i / static_cast<double>(k - 1);
    return g;
}

inline TailReport gaussian_concentration_probe(const std::vector<double>& samples, const std::vector<double>& x_grid,
                                               const TailFitConfig& cfg = {}, std::size_t min_samples = 1000) {
    if (samples.size() < min_samples)
        throw std::invalid_argument("gaussian_concentration_probe: needs at least " + std::to_string(min_samples) +
                                    " samples");
    double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / samples.size();
    std::vector<double> dev(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) dev[i] = samples[i] - mean;
    return fit_gaussian_tail(dev, x_grid, 1.0, cfg);
}

struct EmpiricalConcentrationConfig {
    std::size_t reference_factor = 8;
    double eps_factor = 0.05;  // entropic eps as a fraction of the median reference cost
    SinkhornConfig sinkhorn{};
    TailFitConfig tail{};
    double max_nonconverged = 0.05;
    std::size_t min_batches = 200;
    std::size_t grid_points = 16;  // used when x_grid is empty
};

struct EmpiricalConcentrationReport {
    std::size_t N = 0, batches = 0, reference_size = 0;
    double eps = 0.0;
    std::uint64_t seed = 0;
    std::vector<double> distances;
    double mean = 0.0, sd = 0.0;
    double nonconverged_fraction = 0.0;
    TailReport tail;

    nlohmann::json to_json() const {
        return {{"N", N},
                {"batches", batches},
                {"reference_size", reference_size},
                {"eps", eps},
                {"seed", seed},
                {"mean_w2", mean},
                {"sd_w2", sd},
                {"nonconverged_fraction", nonconverged_fraction},
                {"tail", tail.to_json()}};
    }
};

// Concentration of W2(mu_ref, mu_N) over independent batches of N paths. The
// reference is one large sample of the same process; distances are debiased
// entropic W2 with eps fixed from the reference costs.
inline EmpiricalConcentrationReport empirical_measure_concentration(const PathMap& process, const TimeGrid& grid,
                                                                    int d, std::size_t N, std::size_t batches,
                                                                    std::vector<double> x_grid, std::uint64_t seed,
                                                                    const EmpiricalConcentrationConfig& cfg = {}) {
    if (N < 1) throw std::invalid_argument("empirical_measure_concentration: N must be >= 1");
    if (batches < cfg.min_batches)
        throw std::invalid_argument("empirical_measure_concentration: needs at least " +
                                    std::to_string(cfg.min_batches) + " batches");
    EmpiricalConcentrationReport r;
    r.N = N;
    r.batches = batches;
    r.seed = seed;
    r.reference_size = cfg.reference_factor * N;
    PathBundle ref = process(sample_brownian(grid, d, r.reference_size, derive_seed(seed, 0x4ef)));
    ref.validate();
    const auto R = EmpiricalMeasure::from_bundle(ref);
    const Eigen::MatrixXd Crr = cost_matrix(R, R, 2.0);
    double med = median_cost(Crr);
    r.eps = cfg.eps_factor * (med > 0.0 ? med : 1.0);
    const auto self_ref = sinkhorn_symmetric(Crr, R.weights(), r.eps, cfg.sinkhorn);

    r.distances.resize(batches);
    std::vector<char> ok(batches, 1);
    parallel_for(batches, [&](std::size_t b) {
        PathBundle s = process(sample_brownian(grid, d, N, derive_seed(seed, 0x1000 + b)));
        s.validate();
        const auto B = EmpiricalMeasure::from_bundle(s);
        auto xy = sinkhorn(cost_matrix(R, B, 2.0), R.weights(), B.weights(), r.eps, cfg.sinkhorn);
        auto yy = sinkhorn_symmetric(cost_matrix(B, B, 2.0), B.weights(), r.eps, cfg.sinkhorn);
        double div = xy.value - 0.5 * self_ref.value - 0.5 * yy.value;
        r.distances[b] = std::sqrt(std::max(div, 0.0));
        ok[b] = xy.converged && yy.converged;
    });
    if (!self_ref.converged) std::fill(ok.begin(), ok.end(), 0);
    r.nonconverged_fraction = std::count(ok.begin(), ok.end(), 0) / static_cast<double>(batches);
    if (r.nonconverged_fraction > cfg.max_nonconverged)
        throw std::runtime_error("empirical_measure_concentration: entropic OT failed to converge on " +
                                 std::to_string(r.nonconverged_fraction * 100.0) + "% of batches");

    r.mean = std::accumulate(r.distances.begin(), r.distances.end(), 0.0) / batches;
    double var = 0.0;
    std::vector<double> dev(batches);
    double spread = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
        dev[b] = r.distances[b] - r.mean;
        var += dev[b] * dev[b];
        spread = std::max(spread, std::abs(dev[b]));
    }
    r.sd = batches > 1 ? std::sqrt(var / (batches - 1)) : 0.0;
    if (x_grid.empty()) {
        // top of the grid: the largest x that still has min_hits exceedances
        std::vector<double> a(batches);
        for (std::size_t b = 0; b < batches; ++b) a[b] = std::abs(dev[b]);
        std::size_t k = std::min<std::size_t>(cfg.tail.min_hits, batches) - 1;
        std::nth_element(a.begin(), a.begin() + k, a.end(), std::greater<>());
        double top = a[k] > 0.0 ? a[k] : spread;
        x_grid = linear_grid(0.0, top, cfg.grid_points);
    }
    r.tail = fit_gaussian_tail(dev, x_grid, static_cast<double>(N), cfg.tail);
    return r;
}

struct LsiTestFunction {
    std::string name;
    std::function<double(std::span<const double>)> f;
    std::function<void(std::span<const double>, std::span<double>)> grad;
};

struct LsiRecord {
    std::string name;
    double entropy = 0.0;
    double dirichlet = 0.0;
    double rhs = 0.0;
    double se = 0.0;
    double margin = 0.0;
    bool pass = true;
};

struct LsiReport {
    double C = 0.0;
    std::size_t n = 0;
    std::size_t m = 0;
    std::vector<LsiRecord> records;
    bool pass = true;

    nlohmann::json to_json() const {
        nlohmann::json fns = nlohmann::json::array();
        for (const auto& r : records)
            fns.push_back({{"function", r.name},
                           {"entropy", r.entropy},
                           {"dirichlet", r.dirichlet},
                           {"rhs", r.rhs},
                           {"joint_se", r.se},
                           {"margin", r.margin},
                           {"pass", r.pass}});
        return {{"C", C}, {"n", n}, {"m", m}, {"functions", fns}, {"pass", pass}};
    }
};

// Ent(f^2) = E[f^2 log(f^2 / E f^2)] against C E|grad f|^2. The joint SE uses the
// linearisation of the entropy functional around E f^2.
inline LsiReport lsi_probe(const std::vector<std::vector<double>>& samples, const std::vector<LsiTestFunction>& fns,
                           double C) {
    if (samples.size() < 2) throw std::invalid_argument("lsi_probe: needs at least 2 samples");
    if (!(C >= 0.0)) throw std::invalid_argument("lsi_probe: C must be >= 0");
    const std::size_t n = samples.size(), m = samples[0].size();
    for (const auto& s : samples)
        if (s.size() != m) throw std::invalid_argument("lsi_probe: samples disagree on dimension");
    LsiReport rep;
    rep.C = C;
    rep.n = n;
    rep.m = m;
    for (const auto& fn : fns) {
        std::vector<double> f2(n), g2(n);
        std::vector<double> g(m);
        for (std::size_t i = 0; i < n; ++i) {
            double v = fn.f(samples[i]);
            if (!(v > 0.0) || !std::isfinite(v))
                throw std::domain_error("lsi_probe: test function '" + fn.name + "' is not strictly positive");
            f2[i] = v * v;
            std::fill(g.begin(), g.end(), 0.0);
            fn.grad(samples[i], g);
            double s = 0.0;
            for (double x : g) s += x * x;
            g2[i] = s;
        }
        const double mf = std::accumulate(f2.begin(), f2.end(), 0.0) / n;
        const double lm = std::log(mf);
        double ent = 0.0, dir = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            ent += f2[i] * (std::log(f2[i]) - lm);
            dir += g2[i];
        }
        ent /= n;
        dir /= n;
        // influence of sample i on Ent - C * Dirichlet
        double mean_infl = 0.0, var = 0.0;
        std::vector<double> infl(n);
        for (std::size_t i = 0; i < n; ++i) {
            infl[i] = f2[i] * std::log(f2[i]) - (lm + 1.0) * f2[i] - C * g2[i];
            mean_infl += infl[i];
        }
        mean_infl /= n;
        for (double v : infl) var += (v - mean_infl) * (v - mean_infl);
        var /= static_cast<double>(n - 1);
        LsiRecord r;
        r.name = fn.name;
        r.entropy = ent;
        r.dirichlet = dir;
        r.rhs = C * dir;
        r.se = std::sqrt(var / n);
        r.margin = r.rhs - r.entropy;
        r.pass = r.entropy <= r.rhs + 3.0 * r.se + 1e-12;
        rep.pass = rep.pass && r.pass;
        rep.records.push_back(r);
    }
    return rep;
}

// Constant, a smoothly truncated exponential, and two bounded oscillating
// functions of u = (x - center) . 1 / sqrt(m).
inline std::vector<LsiTestFunction> standard_lsi_family(std::size_t m, double center = 0.0, double R = 4.0) {
    const double inv = 1.0 / std::sqrt(static_cast<double>(m));
    auto u_of = [=](std::span<const double> x) {
        double s = 0.0;
        for (double v : x) s += v - center;
        return s * inv;
    };
    auto fill = [=](std::span<double> g, double du) { std::fill(g.begin(), g.end(), du * inv); };
    std::vector<LsiTestFunction> out;
    out.push_back({"constant", [](std::span<const double>) { return 1.0; },
                   [](std::span<const double>, std::span<double> g) { std::fill(g.begin(), g.end(), 0.0); }});
    out.push_back({"exp-half-truncated",
                   [=](std::span<const double> x) { return std::exp(0.5 * R * std::tanh(u_of(x) / R)); },
                   [=](std::span<const double> x, std::span<double> g) {
                       double u = u_of(x), th = std::tanh(u / R);
                       fill(g, 0.5 * (1.0 - th * th) * std::exp(0.5 * R * th));
                   }});
    out.push_back({"two-plus-sine", [=](std::span<const double> x) { return 2.0 + std::sin(u_of(x)); },
                   [=](std::span<const double> x, std::span<double> g) { fill(g, std::cos(u_of(x))); }});
    out.push_back({"shifted-tanh", [=](std::span<const double> x) { return 1.5 + std::tanh(2.0 * u_of(x)); },
                   [=](std::span<const double> x, std::span<double> g) {
                       double th = std::tanh(2.0 * u_of(x));
                       fill(g, 2.0 * (1.0 - th * th));
                   }});
    return out;
}

// A psi-pushforward of a T2(C) law satisfies T2(C L_psi^2).
inline double lipschitz_pushforward_constant(double C, double L) {
    if (!(C >= 0.0) || !(L >= 0.0))
        throw std::invalid_argument("lipschitz_pushforward_constant: C and L must be >= 0");
    return C * L * L;
}

}  // namespace pathineq
