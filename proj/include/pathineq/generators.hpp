#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pathcore.hpp"

namespace pathineq {

// g_t(omega, y, z) -> out, with y in R^m and z an m x d matrix stored row-major.
using GeneratorFn =
    std::function<void(double, const PathView&, std::span<const double>, std::span<const double>, std::span<double>)>;

enum class GeneratorClass { Lipschitz, QuadraticConvex, Linear };

inline const char* to_string(GeneratorClass c) {
    switch (c) {
        case GeneratorClass::Lipschitz: return "lipschitz";
        case GeneratorClass::QuadraticConvex: return "quadratic_convex";
        case GeneratorClass::Linear: return "linear";
    }
    return "?";
}

// alpha_t(omega) + beta y + gamma z  (m = 1, gamma in R^d)
struct LinearData {
    std::function<double(double, const PathView&)> alpha;
    double L_alpha = 0.0;
    double beta = 0.0;
    std::vector<double> gamma;
    double L_G() const {
        double g = 0.0;
        for (double v : gamma) g += v * v;
        return std::max({L_alpha, std::abs(beta), std::sqrt(g)});
    }
};

// g_t(z) >= a.z + b
struct LowerBound {
    std::vector<double> a;
    double b = 0.0;
};

struct GeneratorMeta {
    GeneratorClass cls = GeneratorClass::Lipschitz;
    double L_g = 0.0;
    std::optional<double> growth_C;            // g <= C (1 + |z|^2)
    std::optional<LowerBound> lower_bound;     // affine minorant
    std::optional<LinearData> linear;
    std::function<double(std::span<const double>)> conjugate;  // analytic g*(q) when known
    std::function<double(std::span<const double>)> z_only;     // g as a function of z alone, when it is one
    std::string name;
};

struct Generator {
    GeneratorFn g;
    GeneratorMeta meta;
};

inline double norm2(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}

inline Generator zero_generator(int m, int d) {
    Generator G;
    G.g = [](double, const PathView&, std::span<const double>, std::span<const double>, std::span<double> o) {
        std::fill(o.begin(), o.end(), 0.0);
    };
    LinearData lin;
    lin.alpha = [](double, const PathView&) { return 0.0; };
    lin.gamma.assign(d, 0.0);
    G.meta.cls = m == 1 ? GeneratorClass::Linear : GeneratorClass::Lipschitz;
    if (m == 1) G.meta.linear = lin;
    G.meta.L_g = 0.0;
    G.meta.name = "zero";
    G.meta.z_only = [](std::span<const double>) { return 0.0; };
    return G;
}

inline Generator linear_generator(LinearData lin) {
    if (!lin.alpha) lin.alpha = [](double, const PathView&) { return 0.0; };
    Generator G;
    G.g = [lin](double t, const PathView& w, std::span<const double> y, std::span<const double> z,
                std::span<double> o) {
        double v = lin.alpha(t, w) + lin.beta * y[0];
        for (std::size_t j = 0; j < lin.gamma.size(); ++j) v += lin.gamma[j] * z[j];
        o[0] = v;
    };
    G.meta.cls = GeneratorClass::Linear;
    G.meta.L_g = lin.L_G();
    G.meta.name = "linear";
    G.meta.linear = lin;
    return G;
}

// (c/2)|z|^2, m = 1
inline Generator quadratic_generator(int d, double c = 1.0) {
    if (!(c > 0.0)) throw std::invalid_argument("quadratic_generator: scale must be positive");
    Generator G;
    G.g = [c](double, const PathView&, std::span<const double>, std::span<const double> z, std::span<double> o) {
        o[0] = 0.5 * c * norm2(z);
    };
    G.meta.cls = GeneratorClass::QuadraticConvex;
    G.meta.L_g = 0.0;
    G.meta.growth_C = 0.5 * c;
    G.meta.lower_bound = LowerBound{std::vector<double>(d, 0.0), 0.0};
    G.meta.conjugate = [c](std::span<const double> q) { return norm2(q) / (2.0 * c); };
    G.meta.z_only = [c](std::span<const double> z) { return 0.5 * c * norm2(z); };
    G.meta.name = "quadratic";
    return G;
}

// (1/2)|pi_R(z)|^2 with pi_R the projection on the ball of radius R: Lipschitz
// with constant R, equal to the quadratic generator wherever |z| <= R.
inline Generator truncated_quadratic_generator(double R) {
    if (!(R > 0.0)) throw std::invalid_argument("truncated_quadratic_generator: radius must be positive");
    auto gz = [R](std::span<const double> z) {
        double n2 = norm2(z);
        return n2 <= R * R ? 0.5 * n2 : 0.5 * R * R;
    };
    Generator G;
    G.g = [gz](double, const PathView&, std::span<const double>, std::span<const double> z, std::span<double> o) {
        o[0] = gz(z);
    };
    G.meta.cls = GeneratorClass::Lipschitz;
    G.meta.L_g = R;
    G.meta.name = "truncated_quadratic";
    return G;
}

// q_t z with a bounded deterministic q (m = 1)
inline Generator martingale_generator(std::function<void(double, std::span<double>)> q, int d, double q_bound) {
    Generator G;
    G.g = [q, d](double t, const PathView&, std::span<const double>, std::span<const double> z, std::span<double> o) {
        std::vector<double> qt(d);
        q(t, qt);
        double v = 0.0;
        for (int j = 0; j < d; ++j) v += qt[j] * z[j];
        o[0] = v;
    };
    G.meta.cls = GeneratorClass::Lipschitz;
    G.meta.L_g = q_bound;
    G.meta.name = "martingale";
    return G;
}

// Closed convex constraint set with an analytic projection.
struct ConstraintSet {
    enum class Kind { Full, Box, HalfSpace } kind = Kind::Full;
    std::vector<double> lo, hi;   // Box
    std::vector<double> normal;   // HalfSpace: {z : normal.z <= offset}
    double offset = 0.0;

    static ConstraintSet full() { return {}; }
    static ConstraintSet box(std::vector<double> lo, std::vector<double> hi) {
        if (lo.size() != hi.size()) throw std::invalid_argument("ConstraintSet: box bounds differ in size");
        for (std::size_t i = 0; i < lo.size(); ++i)
            if (lo[i] > hi[i]) throw std::invalid_argument("ConstraintSet: empty box");
        return {Kind::Box, std::move(lo), std::move(hi), {}, 0.0};
    }
    static ConstraintSet half_space(std::vector<double> n, double c) {
        if (norm2(n) == 0.0) throw std::invalid_argument("ConstraintSet: zero normal");
        return {Kind::HalfSpace, {}, {}, std::move(n), c};
    }
    static ConstraintSet from_name(const std::string& shape) {
        if (shape == "full") return full();
        throw std::invalid_argument("unsupported constraint-set shape '" + shape + "'");
    }

    void project(std::span<const double> x, std::span<double> out) const {
        std::copy(x.begin(), x.end(), out.begin());
        if (kind == Kind::Box) {
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(out[i], lo[i], hi[i]);
        } else if (kind == Kind::HalfSpace) {
            double s = 0.0;
            for (std::size_t i = 0; i < out.size(); ++i) s += normal[i] * out[i];
            if (s > offset) {
                double k = (s - offset) / norm2(normal);
                for (std::size_t i = 0; i < out.size(); ++i) out[i] -= k * normal[i];
            }
        }
    }
    double dist2(std::span<const double> x) const {
        std::vector<double> p(x.size());
        project(x, p);
        double s = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - p[i]) * (x[i] - p[i]);
        return s;
    }
};

// (alpha/2) dist^2(z + theta/alpha, A) - z.theta - |theta|^2 / (2 alpha)
inline Generator utility_generator(double alpha, std::vector<double> theta, ConstraintSet A) {
    if (!(alpha > 0.0)) throw std::invalid_argument("utility_generator: alpha must be positive");
    const int d = static_cast<int>(theta.size());
    if (A.kind == ConstraintSet::Kind::Box && static_cast<int>(A.lo.size()) != d)
        throw std::invalid_argument("utility_generator: box dimension differs from theta");
    if (A.kind == ConstraintSet::Kind::HalfSpace && static_cast<int>(A.normal.size()) != d)
        throw std::invalid_argument("utility_generator: half-space dimension differs from theta");
    const double th2 = norm2(theta);
    auto gz = [alpha, theta, A, th2, d](std::span<const double> z) {
        std::vector<double> s(d);
        double zt = 0.0;
        for (int j = 0; j < d; ++j) {
            s[j] = z[j] + theta[j] / alpha;
            zt += z[j] * theta[j];
        }
        return 0.5 * alpha * A.dist2(s) - zt - th2 / (2.0 * alpha);
    };
    Generator G;
    G.g = [gz](double, const PathView&, std::span<const double>, std::span<const double> z, std::span<double> o) {
        o[0] = gz(z);
    };
    G.meta.z_only = gz;
    G.meta.name = "utility";
    G.meta.lower_bound = LowerBound{std::vector<double>(theta.size()), -th2 / (2.0 * alpha)};
    for (int j = 0; j < d; ++j) G.meta.lower_bound->a[j] = -theta[j];
    if (A.kind == ConstraintSet::Kind::Full) {
        LinearData lin;
        lin.alpha = [c = -th2 / (2.0 * alpha)](double, const PathView&) { return c; };
        lin.gamma.resize(d);
        for (int j = 0; j < d; ++j) lin.gamma[j] = -theta[j];
        G.meta.cls = GeneratorClass::Linear;
        G.meta.linear = lin;
        G.meta.L_g = lin.L_G();
    } else {
        // dist(z + theta/alpha, A) <= |z| + dist(theta/alpha, A) and |z.theta| <= (|z|^2 + |theta|^2)/2
        std::vector<double> ta(d);
        for (int j = 0; j < d; ++j) ta[j] = theta[j] / alpha;
        double C = std::max(alpha + 0.5, alpha * A.dist2(ta) + 0.5 * th2);
        G.meta.cls = GeneratorClass::QuadraticConvex;
        G.meta.growth_C = C;
    }
    return G;
}

// Named constructors with numeric parameters, used by experiment files and the CLI.
inline Generator generator_library(const std::string& name, const std::map<std::string, double>& p, int d = 1) {
    auto get = [&](const std::string& k, double def) {
        auto it = p.find(k);
        return it == p.end() ? def : it->second;
    };
    if (name == "zero") return zero_generator(1, d);
    if (name == "quadratic") return quadratic_generator(d, get("scale", 1.0));
    if (name == "linear" || name == "linear-sin") {
        LinearData lin;
        double a = get("alpha", 0.0);
        if (name == "linear-sin") {
            // alpha_t(omega) = a sin(omega_1(t)), L_alpha = |a|
            lin.alpha = [a](double, const PathView& w) { return a * std::sin(w.current()[0]); };
            lin.L_alpha = std::abs(a);
        } else {
            lin.alpha = [a](double, const PathView&) { return a; };
        }
        lin.beta = get("beta", 0.0);
        lin.gamma.assign(d, 0.0);
        lin.gamma[0] = get("gamma", 0.0);
        Generator G = linear_generator(lin);
        if (name == "linear" && lin.beta == 0.0) {
            auto gam = lin.gamma;
            G.meta.z_only = [a, gam](std::span<const double> z) {
                double v = a;
                for (std::size_t j = 0; j < gam.size(); ++j) v += gam[j] * z[j];
                return v;
            };
            // finite only at q = gamma
            G.meta.conjugate = [a, gam](std::span<const double> q) {
                for (std::size_t j = 0; j < gam.size(); ++j)
                    if (q[j] != gam[j]) return std::numeric_limits<double>::infinity();
                return -a;
            };
        }
        return G;
    }
    if (name == "martingale") {
        double q = get("q", 0.0);
        return martingale_generator([q](double, std::span<double> o) { std::fill(o.begin(), o.end(), q); }, d,
                                    std::abs(q) * std::sqrt(static_cast<double>(d)));
    }
    if (name == "utility") {
        std::vector<double> theta(d, get("theta", 0.0));
        ConstraintSet A;
        int shape = static_cast<int>(get("shape", 0));  // 0 full, 1 box [lo,hi]^d, 2 half-space {sum z <= c}
        if (shape == 0) A = ConstraintSet::full();
        else if (shape == 1) A = ConstraintSet::box(std::vector<double>(d, get("lo", 0.0)), std::vector<double>(d, get("hi", 0.0)));
        else if (shape == 2) A = ConstraintSet::half_space(std::vector<double>(d, 1.0), get("c", 0.0));
        else throw std::invalid_argument("unsupported constraint-set shape code " + std::to_string(shape));
        return utility_generator(get("alpha", 1.0), theta, A);
    }
    throw std::invalid_argument("unknown generator '" + name + "'");
}

}  // namespace pathineq
