#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "parallel.hpp"
#include "random.hpp"

namespace pathineq {

struct TimeGrid {
    double horizon = 1.0;
    std::int64_t steps = 1;

    double dt() const { return horizon / static_cast<double>(steps); }
    double time(std::int64_t k) const {
        return k == steps ? horizon : horizon * static_cast<double>(k) / static_cast<double>(steps);
    }
    std::vector<double> times() const {
        std::vector<double> t(static_cast<std::size_t>(steps + 1));
        for (std::int64_t k = 0; k <= steps; ++k) t[k] = time(k);
        return t;
    }
    std::size_t size() const { return static_cast<std::size_t>(steps + 1); }
    bool operator==(const TimeGrid&) const = default;
};

inline TimeGrid make_grid(double T, std::int64_t steps) {
    if (!(T > 0.0) || !std::isfinite(T)) throw std::invalid_argument("make_grid: horizon must be positive");
    if (steps < 1) throw std::invalid_argument("make_grid: steps must be >= 1");
    return TimeGrid{T, steps};
}

class Path {
public:
    Path() = default;
    Path(TimeGrid grid, int dim) : grid_(grid), dim_(dim), values_(grid.size() * dim, 0.0) {
        if (dim < 1) throw std::invalid_argument("Path: dimension must be >= 1");
    }
    Path(TimeGrid grid, int dim, std::vector<double> values) : grid_(grid), dim_(dim), values_(std::move(values)) {
        if (dim < 1) throw std::invalid_argument("Path: dimension must be >= 1");
        if (values_.size() != grid.size() * dim) throw std::invalid_argument("Path: value count does not match grid");
    }

    const TimeGrid& grid() const { return grid_; }
    int dim() const { return dim_; }
    std::size_t rows() const { return grid_.size(); }

    std::span<double> row(std::size_t k) { return {values_.data() + k * dim_, static_cast<std::size_t>(dim_)}; }
    std::span<const double> row(std::size_t k) const {
        return {values_.data() + k * dim_, static_cast<std::size_t>(dim_)};
    }
    double& operator()(std::size_t k, int j) { return values_[k * dim_ + j]; }
    double operator()(std::size_t k, int j) const { return values_[k * dim_ + j]; }

    const std::vector<double>& values() const { return values_; }
    std::vector<double>& values() { return values_; }

    bool operator==(const Path& o) const { return grid_ == o.grid_ && dim_ == o.dim_ && values_ == o.values_; }

private:
    TimeGrid grid_{};
    int dim_ = 1;
    std::vector<double> values_;
};

// Read-only prefix of a path: indices 0..last. Callables that must be adapted
// receive one of these and cannot look past `last`.
class PathView {
public:
    PathView(const Path& p, std::size_t last) : p_(&p), last_(last) {
        if (last >= p.rows()) throw std::out_of_range("PathView: index past end of path");
    }
    std::size_t last() const { return last_; }
    int dim() const { return p_->dim(); }
    double time() const { return p_->grid().time(static_cast<std::int64_t>(last_)); }
    const TimeGrid& grid() const { return p_->grid(); }
    std::span<const double> at(std::size_t k) const {
        if (k > last_) throw std::out_of_range("PathView: read beyond current time");
        return p_->row(k);
    }
    std::span<const double> current() const { return p_->row(last_); }
    double operator()(std::size_t k, int j) const { return at(k)[j]; }

private:
    const Path* p_;
    std::size_t last_;
};

enum class MeasureKind { Wiener, Tilted, Pushforward };

struct MeasureTag {
    MeasureKind kind = MeasureKind::Wiener;
    std::string label;
};

inline const char* to_string(MeasureKind k) {
    switch (k) {
        case MeasureKind::Wiener: return "wiener";
        case MeasureKind::Tilted: return "tilted";
        case MeasureKind::Pushforward: return "pushforward";
    }
    return "?";
}

inline MeasureKind measure_kind_from(const std::string& s) {
    if (s == "wiener") return MeasureKind::Wiener;
    if (s == "tilted") return MeasureKind::Tilted;
    if (s == "pushforward") return MeasureKind::Pushforward;
    throw std::invalid_argument("unknown measure kind '" + s + "'");
}

struct PathBundle {
    TimeGrid grid{};
    int dim = 1;
    std::vector<Path> paths;
    std::uint64_t seed = 0;
    MeasureTag tag{};

    std::size_t size() const { return paths.size(); }
    const Path& operator[](std::size_t i) const { return paths[i]; }
    Path& operator[](std::size_t i) { return paths[i]; }

    void validate() const {
        if (paths.empty()) throw std::invalid_argument("PathBundle: empty bundle");
        for (const auto& p : paths)
            if (!(p.grid() == grid) || p.dim() != dim)
                throw std::invalid_argument("PathBundle: paths disagree on grid or dimension");
    }
    bool operator==(const PathBundle& o) const {
        return grid == o.grid && dim == o.dim && paths == o.paths && seed == o.seed;
    }
};

inline double sup_distance(const Path& a, const Path& b) {
    if (!(a.grid() == b.grid()) || a.dim() != b.dim())
        throw std::invalid_argument("sup_distance: paths live on different grids");
    double best = 0.0;
    const auto& va = a.values();
    const auto& vb = b.values();
    const int d = a.dim();
    for (std::size_t k = 0; k < a.rows(); ++k) {
        double s = 0.0;
        for (int j = 0; j < d; ++j) {
            double e = va[k * d + j] - vb[k * d + j];
            s += e * e;
        }
        best = std::max(best, s);
    }
    return std::sqrt(best);
}

inline double sup_norm(const Path& a) {
    double best = 0.0;
    for (std::size_t k = 0; k < a.rows(); ++k) {
        double s = 0.0;
        for (double v : a.row(k)) s += v * v;
        best = std::max(best, s);
    }
    return std::sqrt(best);
}

class CameronMartinShift {
public:
    using Derivative = std::function<void(double, std::span<double>)>;

    CameronMartinShift(TimeGrid grid, int dim, Derivative hdot, std::string label = {})
        : label_(std::move(label)), h_(grid, dim), hdot_(std::move(hdot)) {
        const double dt = grid.dt();
        std::vector<double> buf(dim);
        double norm2 = 0.0;
        for (std::int64_t k = 0; k < grid.steps; ++k) {
            std::fill(buf.begin(), buf.end(), 0.0);
            hdot_(grid.time(k), buf);
            for (int j = 0; j < dim; ++j) {
                h_(k + 1, j) = h_(k, j) + buf[j] * dt;
                norm2 += buf[j] * buf[j] * dt;
            }
        }
        h_norm_ = std::sqrt(norm2);
    }

    const Path& values() const { return h_; }
    double h_norm() const { return h_norm_; }
    double sup_norm() const { return pathineq::sup_norm(h_); }
    const std::string& label() const { return label_; }
    const Derivative& hdot() const { return hdot_; }

private:
    std::string label_;
    Path h_;
    Derivative hdot_;
    double h_norm_ = 0.0;
};

inline Path add_bump(const Path& p, const Path& bump) {
    if (!(p.grid() == bump.grid()) || p.dim() != bump.dim())
        throw std::invalid_argument("add_bump: bump does not match path grid/dimension");
    Path out = p;
    auto& v = out.values();
    const auto& b = bump.values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += b[i];
    return out;
}

inline Path apply_shift(const Path& p, const CameronMartinShift& h) {
    if (p.dim() != h.values().dim()) throw std::invalid_argument("apply_shift: dimension mismatch");
    return add_bump(p, h.values());
}

enum class TiltKind { Deterministic, Adapted };
enum class TiltShape { Zero, Constant, TimeVarying, Adapted };

struct GirsanovTilt {
    using Fn = std::function<void(double, const PathView&, std::span<double>)>;

    int dim = 1;
    Fn q;
    std::optional<double> bound;
    TiltKind kind = TiltKind::Deterministic;
    TiltShape shape = TiltShape::TimeVarying;
    std::string label;

    // Evaluates q at grid index k and enforces the declared bound.
    void eval(const PathView& w, std::span<double> out) const {
        std::fill(out.begin(), out.end(), 0.0);
        q(w.time(), w, out);
        if (bound) {
            double s = 0.0;
            for (double v : out) s += v * v;
            if (std::sqrt(s) > *bound * (1.0 + 1e-12) + 1e-300)
                throw std::domain_error("GirsanovTilt '" + label + "': |q| exceeds declared bound");
        }
    }

    static GirsanovTilt zero(int dim) {
        return {dim, [](double, const PathView&, std::span<double> o) { std::fill(o.begin(), o.end(), 0.0); },
                0.0, TiltKind::Deterministic, TiltShape::Zero, "zero"};
    }
    static GirsanovTilt constant(std::vector<double> c, std::string label = {}) {
        double n = 0.0;
        for (double v : c) n += v * v;
        int d = static_cast<int>(c.size());
        if (label.empty()) label = "constant";
        return {d,
                [c](double, const PathView&, std::span<double> o) { std::copy(c.begin(), c.end(), o.begin()); },
                std::sqrt(n), TiltKind::Deterministic, n == 0.0 ? TiltShape::Zero : TiltShape::Constant,
                std::move(label)};
    }
    static GirsanovTilt deterministic(int dim, std::function<void(double, std::span<double>)> f, double bound,
                                      std::string label) {
        return {dim, [f = std::move(f)](double t, const PathView&, std::span<double> o) { f(t, o); }, bound,
                TiltKind::Deterministic, TiltShape::TimeVarying, std::move(label)};
    }
    static GirsanovTilt adapted(int dim, Fn f, double bound, std::string label) {
        return {dim, std::move(f), bound, TiltKind::Adapted, TiltShape::Adapted, std::move(label)};
    }
};

inline PathBundle sample_brownian(const TimeGrid& grid, int d, std::size_t n, std::uint64_t seed) {
    if (d < 1 || n < 1) throw std::invalid_argument("sample_brownian: d and n must be >= 1");
    PathBundle out{grid, d, std::vector<Path>(n), seed, {MeasureKind::Wiener, "wiener"}};
    const double sdt = std::sqrt(grid.dt());
    parallel_for(n, [&](std::size_t i) {
        auto rng = stream_for(seed, i);
        std::normal_distribution<double> nd(0.0, 1.0);
        Path p(grid, d);
        for (std::int64_t k = 0; k < grid.steps; ++k)
            for (int j = 0; j < d; ++j) p(k + 1, j) = p(k, j) + sdt * nd(rng);
        out.paths[i] = std::move(p);
    });
    return out;
}

// Paths of the canonical process under Q: increments of the Brownian sample with
// the same seed, plus q dt. Draw order matches sample_brownian so that the two
// bundles are coupled path by path.
inline PathBundle sample_tilted_brownian(const TimeGrid& grid, const GirsanovTilt& q, std::size_t n,
                                         std::uint64_t seed) {
    if (!q.bound) throw std::invalid_argument("sample_tilted_brownian: tilt '" + q.label + "' has no bound");
    if (n < 1) throw std::invalid_argument("sample_tilted_brownian: n must be >= 1");
    const int d = q.dim;
    PathBundle out{grid, d, std::vector<Path>(n), seed, {MeasureKind::Tilted, q.label}};
    const double dt = grid.dt(), sdt = std::sqrt(dt);
    parallel_for(n, [&](std::size_t i) {
        auto rng = stream_for(seed, i);
        std::normal_distribution<double> nd(0.0, 1.0);
        Path p(grid, d);
        std::vector<double> qk(d);
        for (std::int64_t k = 0; k < grid.steps; ++k) {
            q.eval(PathView(p, k), qk);
            for (int j = 0; j < d; ++j) p(k + 1, j) = p(k, j) + qk[j] * dt + sdt * nd(rng);
        }
        out.paths[i] = std::move(p);
    });
    return out;
}

using PathMap = std::function<PathBundle(const PathBundle&)>;

inline PathBundle identity_process(const PathBundle& b) { return b; }

}  // namespace pathineq
