#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "parallel.hpp"
#include "pathcore.hpp"

namespace pathineq {

struct SdeModel {
    using Scalar = std::function<double(double, double)>;
    using Vector = std::function<void(double, double, std::span<double>)>;

    int d = 1;
    Scalar b;
    Vector sigma;
    double L_sigma = 0.0;
    double sigma_inf = 1.0;
    double ellipticity = 1.0;  // lower bound c on sigma.sigma'
    std::optional<Scalar> dt_b;
    std::optional<Vector> dt_sigma;
    double x0 = 0.0;
    std::string label;

    double a(double t, double x) const {
        std::vector<double> s(d);
        sigma(t, x, s);
        double v = 0.0;
        for (double e : s) v += e * e;
        return v;
    }
    // b / (sigma sigma')
    double beta(double t, double x) const { return b(t, x) / a(t, x); }

    std::optional<double> dt_beta(double t, double x) const {
        if (!dt_b) return std::nullopt;
        std::vector<double> s(d), ds(d, 0.0);
        sigma(t, x, s);
        double av = 0.0, dav = 0.0;
        if (dt_sigma) (*dt_sigma)(t, x, ds);
        for (int j = 0; j < d; ++j) {
            av += s[j] * s[j];
            dav += 2.0 * s[j] * ds[j];
        }
        return (*dt_b)(t, x) / av - b(t, x) * dav / (av * av);
    }
};

// Spot checks of ellipticity and the sup bound on sigma over a probe lattice.
inline SdeModel validate_sde_model(SdeModel m, double horizon = 1.0) {
    if (m.d < 1) throw std::invalid_argument("SdeModel: d must be >= 1");
    if (!m.b || !m.sigma) throw std::invalid_argument("SdeModel: missing coefficient");
    if (!(m.ellipticity > 0.0)) throw std::invalid_argument("SdeModel: ellipticity constant must be positive");
    std::vector<double> s(m.d);
    for (int it = 0; it <= 4; ++it) {
        double t = horizon * it / 4.0;
        for (int ix = -40; ix <= 40; ++ix) {
            double x = m.x0 + 0.25 * ix;
            m.sigma(t, x, s);
            double a = 0.0;
            for (double e : s) a += e * e;
            if (a < m.ellipticity * (1.0 - 1e-12))
                throw std::invalid_argument("SdeModel '" + m.label + "': sigma.sigma' below the ellipticity bound");
            if (std::sqrt(a) > m.sigma_inf * (1.0 + 1e-12))
                throw std::invalid_argument("SdeModel '" + m.label + "': |sigma| exceeds sigma_inf");
            if (!std::isfinite(m.b(t, x))) throw std::invalid_argument("SdeModel '" + m.label + "': drift not finite");
        }
    }
    return m;
}

inline SdeModel constant_sigma_model(SdeModel::Scalar b, double sigma, double x0, std::string label) {
    SdeModel m;
    m.d = 1;
    m.b = std::move(b);
    m.sigma = [sigma](double, double, std::span<double> o) { o[0] = sigma; };
    m.L_sigma = 0.0;
    m.sigma_inf = std::abs(sigma);
    m.ellipticity = sigma * sigma;
    m.dt_b = [](double, double) { return 0.0; };
    m.dt_sigma = [](double, double, std::span<double> o) { std::fill(o.begin(), o.end(), 0.0); };
    m.x0 = x0;
    m.label = std::move(label);
    return validate_sde_model(std::move(m));
}

// dX = -U'(X) dt + sqrt(2/lambda) dW
inline SdeModel langevin_model(std::function<double(double)> Uprime, double lambda, double x0 = 0.0) {
    if (!(lambda > 0.0)) throw std::invalid_argument("langevin_model: lambda must be positive");
    return constant_sigma_model([Up = std::move(Uprime)](double, double x) { return -Up(x); }, std::sqrt(2.0 / lambda),
                                x0, "langevin");
}

namespace detail {
// X_{k+1} = X_k + drift dt + diffusion . dW, in this order for every scheme here
inline double euler_step(double x, double drift, double dt, const double* diff, const double* dw, int d) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) s += diff[j] * dw[j];
    return x + drift * dt + s;
}
}  // namespace detail

inline PathBundle euler_maruyama(const SdeModel& m, const PathBundle& noise) {
    noise.validate();
    if (noise.dim != m.d) throw std::invalid_argument("euler_maruyama: noise dimension does not match model");
    const TimeGrid& g = noise.grid;
    const double dt = g.dt();
    PathBundle out{g, 1, std::vector<Path>(noise.size()), noise.seed, {MeasureKind::Pushforward, "euler:" + m.label}};
    parallel_for(noise.size(), [&](std::size_t i) {
        Path x(g, 1);
        x(0, 0) = m.x0;
        std::vector<double> s(m.d), dw(m.d);
        for (std::int64_t k = 0; k < g.steps; ++k) {
            double t = g.time(k), xk = x(k, 0);
            m.sigma(t, xk, s);
            for (int j = 0; j < m.d; ++j) dw[j] = noise[i](k + 1, j) - noise[i](k, j);
            x(k + 1, 0) = detail::euler_step(xk, m.b(t, xk), dt, s.data(), dw.data(), m.d);
        }
        out.paths[i] = std::move(x);
    });
    return out;
}

struct ZvonkinConfig {
    std::optional<double> R;  // explicit half-width around x0; default 6 sigma_inf sqrt(T), grown
    int n_x = 4001;
    double tail_tol = 1e-6;
};

// Tabulated space transform on a (time x space) lattice:
//   f_t(x) = exp(-2 int_{-inf}^x beta_t),  F_t(x) = int_0^x f_t,  G_t = F_t^{-1},
// with beta = b / (sigma sigma'). Values between time slices are blended linearly.
class ZvonkinTransform {
public:
    double lo = 0.0, hi = 0.0, dx = 0.0, horizon = 1.0, tail = 0.0;
    int n_x = 0, n_t = 0;
    bool identity = false;
    bool analytic_dt = false;
    std::vector<double> beta, dbeta, f, F, dtF;  // row-major [time][space]

    double x_at(int i) const { return lo + dx * i; }
    double t_at(int j) const { return j == n_t ? horizon : horizon * j / n_t; }
    std::size_t idx(int j, int i) const { return static_cast<std::size_t>(j) * n_x + i; }

    std::pair<int, double> time_slot(double t) const {
        if (n_t == 0 || t <= 0.0) return {0, 0.0};
        if (t >= horizon) return {n_t, 0.0};
        double u = t / horizon * n_t;
        int j = std::min(n_t - 1, static_cast<int>(std::floor(u)));
        return {j, u - j};
    }

    // value of a table at (t, x); linear in x with flat extension, blended in t
    double interp(const std::vector<double>& tab, double t, double x) const {
        auto [j, w] = time_slot(t);
        double v0 = interp_row(tab, j, x);
        if (w == 0.0) return v0;
        return (1.0 - w) * v0 + w * interp_row(tab, j + 1, x);
    }

    double F_at(double t, double x) const {
        if (identity) return x;
        // F extends linearly outside the lattice with the end slopes
        auto [j, w] = time_slot(t);
        auto row = [&](int jj) {
            if (x < lo) return F[idx(jj, 0)] - f[idx(jj, 0)] * (lo - x);
            if (x > hi) return F[idx(jj, n_x - 1)] + f[idx(jj, n_x - 1)] * (x - hi);
            return interp_row(F, jj, x);
        };
        double v0 = row(j);
        return w == 0.0 ? v0 : (1.0 - w) * v0 + w * row(j + 1);
    }
    double f_at(double t, double x) const { return identity ? 1.0 : interp(f, t, x); }
    double dtF_at(double t, double x) const { return identity ? 0.0 : interp(dtF, t, x); }

    double y_min(double t) const { return F_at(t, lo); }
    double y_max(double t) const { return F_at(t, hi); }

    // Inverse of the (blended, piecewise-linear) F_t by bisection over lattice
    // cells, then exact inversion of the linear piece. Outside the range the
    // linear extension of F is inverted.
    double G_at(double t, double y) const {
        if (identity) return y;
        auto [j, w] = time_slot(t);
        auto Fv = [&](int i) {
            double v = F[idx(j, i)];
            return w == 0.0 ? v : (1.0 - w) * v + w * F[idx(j + 1, i)];
        };
        auto fv = [&](int i) {
            double v = f[idx(j, i)];
            return w == 0.0 ? v : (1.0 - w) * v + w * f[idx(j + 1, i)];
        };
        double y0 = Fv(0), y1 = Fv(n_x - 1);
        if (y <= y0) return lo - (y0 - y) / fv(0);
        if (y >= y1) return hi + (y - y1) / fv(n_x - 1);
        int a = 0, b = n_x - 1;
        while (b - a > 1) {
            int mid = (a + b) / 2;
            if (Fv(mid) <= y) a = mid;
            else b = mid;
        }
        double Fa = Fv(a), Fb = Fv(b);
        double lam = (y - Fa) / (Fb - Fa);
        return x_at(a) + lam * dx;
    }

    void write_csv(std::ostream& os) const {
        os << "t,x,f,F,dtF\n";
        for (int j = 0; j <= n_t; ++j)
            for (int i = 0; i < n_x; ++i)
                os << t_at(j) << "," << x_at(i) << "," << f[idx(j, i)] << "," << F[idx(j, i)] << ","
                   << dtF[idx(j, i)] << "\n";
    }

private:
    double interp_row(const std::vector<double>& tab, int j, double x) const {
        if (x <= lo) return tab[idx(j, 0)];
        if (x >= hi) return tab[idx(j, n_x - 1)];
        double u = (x - lo) / dx;
        int i = std::min(n_x - 2, static_cast<int>(std::floor(u)));
        double lam = u - i;
        return (1.0 - lam) * tab[idx(j, i)] + lam * tab[idx(j, i + 1)];
    }
};

namespace detail {
// L1 mass of |beta| on [a, b] at time t, trapezoid with n cells
inline double l1_mass(const SdeModel& m, double t, double a, double b, int n = 4000) {
    double h = (b - a) / n, s = 0.0;
    for (int i = 0; i <= n; ++i) {
        double v = std::abs(m.beta(t, a + h * i));
        s += (i == 0 || i == n) ? 0.5 * v : v;
    }
    return s * h;
}

inline double tail_mass(const SdeModel& m, double lo, double hi, double horizon, int n_probe_t = 8) {
    double w = 10.0 * (hi - lo), worst = 0.0;
    for (int j = 0; j <= n_probe_t; ++j) {
        double t = horizon * j / n_probe_t;
        worst = std::max(worst, l1_mass(m, t, hi, hi + w) + l1_mass(m, t, lo - w, lo));
    }
    return worst;
}

inline bool drift_vanishes(const SdeModel& m, double lo, double hi, double horizon) {
    for (int j = 0; j <= 8; ++j)
        for (int i = 0; i <= 400; ++i)
            if (m.b(horizon * j / 8, lo + (hi - lo) * i / 400) != 0.0) return false;
    return true;
}
}  // namespace detail

inline ZvonkinTransform build_zvonkin(const SdeModel& m, double horizon, int n_t, const ZvonkinConfig& cfg = {}) {
    if (n_t < 1 || cfg.n_x < 3) throw std::invalid_argument("build_zvonkin: lattice too small");
    ZvonkinTransform z;
    z.horizon = horizon;
    z.n_t = n_t;
    z.n_x = cfg.n_x;
    double half = cfg.R ? *cfg.R : 6.0 * m.sigma_inf * std::sqrt(horizon);
    auto range = [&](double h) { return std::pair{std::min(m.x0 - h, -1e-9), std::max(m.x0 + h, 1e-9)}; };
    auto [lo, hi] = range(half);
    double tail = detail::tail_mass(m, lo, hi, horizon);
    if (cfg.R) {
        if (tail > cfg.tail_tol)
            throw std::invalid_argument("build_zvonkin: |b/(sigma sigma')| has L1 tail " + std::to_string(tail) +
                                        " beyond the requested range");
    } else {
        int grow = 0;
        while (tail > cfg.tail_tol) {
            if (++grow > 30)
                throw std::invalid_argument("build_zvonkin: |b/(sigma sigma')| is not integrable (tail " +
                                            std::to_string(tail) + ")");
            half *= 2.0;
            std::tie(lo, hi) = range(half);
            tail = detail::tail_mass(m, lo, hi, horizon);
        }
    }
    z.lo = lo;
    z.hi = hi;
    z.tail = tail;
    z.dx = (hi - lo) / (cfg.n_x - 1);
    z.identity = detail::drift_vanishes(m, lo, hi, horizon);
    z.analytic_dt = m.dt_b.has_value();

    const int nx = z.n_x, nt1 = n_t + 1;
    const std::size_t N = static_cast<std::size_t>(nt1) * nx;
    z.beta.assign(N, 0.0);
    z.dbeta.assign(N, 0.0);
    z.f.assign(N, 1.0);
    z.F.assign(N, 0.0);
    z.dtF.assign(N, 0.0);
    // the lattice contains a point within dx of 0; F is pinned so that F_t(0) = 0
    parallel_for(static_cast<std::size_t>(nt1), [&](std::size_t jj) {
        const int j = static_cast<int>(jj);
        const double t = z.t_at(j);
        for (int i = 0; i < nx; ++i) {
            z.beta[z.idx(j, i)] = m.beta(t, z.x_at(i));
            if (auto db = m.dt_beta(t, z.x_at(i))) z.dbeta[z.idx(j, i)] = *db;
        }
        double I = 0.0;
        z.f[z.idx(j, 0)] = 1.0;
        for (int i = 1; i < nx; ++i) {
            I += 0.5 * z.dx * (z.beta[z.idx(j, i - 1)] + z.beta[z.idx(j, i)]);
            z.f[z.idx(j, i)] = std::exp(-2.0 * I);
        }
        double C = 0.0;
        z.F[z.idx(j, 0)] = 0.0;
        for (int i = 1; i < nx; ++i) {
            C += 0.5 * z.dx * (z.f[z.idx(j, i - 1)] + z.f[z.idx(j, i)]);
            z.F[z.idx(j, i)] = C;
        }
        // shift so that F_t(0) = 0, using the linear interpolant at 0
        double u = (0.0 - z.lo) / z.dx;
        int i0 = std::min(nx - 2, static_cast<int>(std::floor(u)));
        double lam = u - i0;
        double F0 = (1.0 - lam) * z.F[z.idx(j, i0)] + lam * z.F[z.idx(j, i0 + 1)];
        for (int i = 0; i < nx; ++i) z.F[z.idx(j, i)] -= F0;
    });
    const double dt = horizon / n_t;
    if (!z.analytic_dt) {
        // central differences in t; second-order one-sided stencils at the ends
        std::vector<double> db(N);
        auto deriv = [&](const std::vector<double>& tab, int j, int i) {
            if (n_t == 1) return (tab[z.idx(1, i)] - tab[z.idx(0, i)]) / dt;
            if (j == 0) return (-3.0 * tab[z.idx(0, i)] + 4.0 * tab[z.idx(1, i)] - tab[z.idx(2, i)]) / (2.0 * dt);
            if (j == n_t)
                return (3.0 * tab[z.idx(n_t, i)] - 4.0 * tab[z.idx(n_t - 1, i)] + tab[z.idx(n_t - 2, i)]) / (2.0 * dt);
            return (tab[z.idx(j + 1, i)] - tab[z.idx(j - 1, i)]) / (2.0 * dt);
        };
        for (int j = 0; j <= n_t; ++j)
            for (int i = 0; i < nx; ++i) {
                z.dtF[z.idx(j, i)] = deriv(z.F, j, i);
                db[z.idx(j, i)] = deriv(z.beta, j, i);
            }
        z.dbeta = std::move(db);
    } else {
        // d/dt f = -2 f int_{lo}^x d/dt beta ; d/dt F = int_0^x d/dt f
        for (int j = 0; j <= n_t; ++j) {
            double I = 0.0, C = 0.0;
            std::vector<double> dtf(nx);
            dtf[0] = 0.0;
            for (int i = 1; i < nx; ++i) {
                I += 0.5 * z.dx * (z.dbeta[z.idx(j, i - 1)] + z.dbeta[z.idx(j, i)]);
                dtf[i] = -2.0 * z.f[z.idx(j, i)] * I;
            }
            z.dtF[z.idx(j, 0)] = 0.0;
            for (int i = 1; i < nx; ++i) {
                C += 0.5 * z.dx * (dtf[i - 1] + dtf[i]);
                z.dtF[z.idx(j, i)] = C;
            }
            double u = (0.0 - z.lo) / z.dx;
            int i0 = std::min(nx - 2, static_cast<int>(std::floor(u)));
            double lam = u - i0;
            double c0 = (1.0 - lam) * z.dtF[z.idx(j, i0)] + lam * z.dtF[z.idx(j, i0 + 1)];
            for (int i = 0; i < nx; ++i) z.dtF[z.idx(j, i)] -= c0;
        }
    }
    for (double v : z.F)
        if (!std::isfinite(v)) throw std::runtime_error("build_zvonkin: non-finite table entry");
    return z;
}

enum class CxVariant { Theorem, TheoremLinearSigma, Pushforward, PushforwardLinearSigma };

inline const char* to_string(CxVariant v) {
    switch (v) {
        case CxVariant::Theorem: return "theorem";
        case CxVariant::TheoremLinearSigma: return "theorem_linear_sigma";
        case CxVariant::Pushforward: return "pushforward";
        case CxVariant::PushforwardLinearSigma: return "pushforward_linear_sigma";
    }
    return "?";
}

struct SdeConstants {
    double c1 = 0, c2 = 0, c3 = 0, c4 = 0;
    double C_y = 0;  // constant for the transformed process Y
    double C_x = 0;  // the reported variant
    CxVariant variant = CxVariant::Theorem;
    double C_x_theorem = 0, C_x_theorem_linear_sigma = 0, C_x_pushforward = 0, C_x_pushforward_linear_sigma = 0;

    nlohmann::json to_json() const {
        return {{"c1", c1},
                {"c2", c2},
                {"c3", c3},
                {"c4", c4},
                {"C_y", C_y},
                {"C_x", C_x},
                {"C_x_variant", pathineq::to_string(variant)},
                {"C_x_variants",
                 {{"theorem", C_x_theorem},
                  {"theorem_linear_sigma", C_x_theorem_linear_sigma},
                  {"pushforward", C_x_pushforward},
                  {"pushforward_linear_sigma", C_x_pushforward_linear_sigma}}}};
    }
};

// C_x from c1..c3 and the sigma metadata, under each reading of the formula.
inline SdeConstants sde_constants_from(double c1, double c2, double c3, double c4, double sigma_inf, double L_sigma,
                                       CxVariant report = CxVariant::Theorem) {
    SdeConstants s;
    s.c1 = c1;
    s.c2 = c2;
    s.c3 = c3;
    s.c4 = c4;
    const double e = std::exp(2.0 * c1);
    const double K2 = std::max(c3 * e, sigma_inf * c2 * e + e * L_sigma * L_sigma);
    const double K1 = std::max(c3 * e, sigma_inf * c2 * e + e * L_sigma);
    s.C_y = 6.0 * std::exp(15.0 * K2);
    s.C_x_theorem = 6.0 * std::exp(c1 + 15.0 * K2);
    s.C_x_theorem_linear_sigma = 6.0 * std::exp(c1 + 15.0 * K1);
    s.C_x_pushforward = 6.0 * std::exp(2.0 * c1 + 15.0 * K2);
    s.C_x_pushforward_linear_sigma = 6.0 * std::exp(2.0 * c1 + 15.0 * K1);
    s.variant = report;
    switch (report) {
        case CxVariant::Theorem: s.C_x = s.C_x_theorem; break;
        case CxVariant::TheoremLinearSigma: s.C_x = s.C_x_theorem_linear_sigma; break;
        case CxVariant::Pushforward: s.C_x = s.C_x_pushforward; break;
        case CxVariant::PushforwardLinearSigma: s.C_x = s.C_x_pushforward_linear_sigma; break;
    }
    return s;
}

// c1 = sup_t ||beta_t||_L1, c2 = sup_t ||beta_t||_inf, c3 = sup_t ||d/dt beta_t||_L1,
// c4 = || sup_t d/dt beta_t ||_L1 (signed supremum, then absolute value).
inline SdeConstants zvonkin_constants(const SdeModel& m, const ZvonkinTransform& z,
                                      CxVariant report = CxVariant::Theorem) {
    double c1 = 0, c2 = 0, c3 = 0, c4 = 0;
    std::vector<double> supdt(z.n_x, -std::numeric_limits<double>::infinity());
    for (int j = 0; j <= z.n_t; ++j) {
        double l1 = 0, l1dt = 0;
        for (int i = 0; i < z.n_x; ++i) {
            double w = (i == 0 || i == z.n_x - 1) ? 0.5 * z.dx : z.dx;
            double b = z.beta[z.idx(j, i)], db = z.dbeta[z.idx(j, i)];
            l1 += w * std::abs(b);
            l1dt += w * std::abs(db);
            c2 = std::max(c2, std::abs(b));
            supdt[i] = std::max(supdt[i], db);
        }
        c1 = std::max(c1, l1);
        c3 = std::max(c3, l1dt);
    }
    for (int i = 0; i < z.n_x; ++i) c4 += ((i == 0 || i == z.n_x - 1) ? 0.5 * z.dx : z.dx) * std::abs(supdt[i]);
    for (double v : {c1, c2, c3, c4})
        if (!std::isfinite(v)) throw std::runtime_error("zvonkin_constants: non-finite quadrature");
    return sde_constants_from(c1, c2, c3, c4, m.sigma_inf, m.L_sigma, report);
}

struct ZvonkinSolution {
    PathBundle X;
    PathBundle Y;
    std::size_t range_exits = 0;  // paths that left the tabulated range at least once
    double exit_fraction = 0.0;
};

// Euler on Y = F_t(X): dY = dtF(G(Y)) dt + f(G(Y)) sigma(G(Y)) dW, then X = G(Y).
inline ZvonkinSolution solve_sde_zvonkin(const SdeModel& m, const ZvonkinTransform& z, const PathBundle& noise) {
    noise.validate();
    if (noise.dim != m.d) throw std::invalid_argument("solve_sde_zvonkin: noise dimension does not match model");
    const TimeGrid& g = noise.grid;
    const double dt = g.dt();
    ZvonkinSolution sol;
    sol.X = {g, 1, std::vector<Path>(noise.size()), noise.seed, {MeasureKind::Pushforward, "zvonkin:" + m.label}};
    sol.Y = {g, 1, std::vector<Path>(noise.size()), noise.seed, {MeasureKind::Pushforward, "zvonkin-y:" + m.label}};
    std::vector<char> exited(noise.size(), 0);
    parallel_for(noise.size(), [&](std::size_t i) {
        Path x(g, 1), y(g, 1);
        x(0, 0) = m.x0;
        y(0, 0) = z.F_at(0.0, m.x0);
        std::vector<double> s(m.d), dw(m.d);
        for (std::int64_t k = 0; k < g.steps; ++k) {
            const double t = g.time(k);
            const double xk = x(k, 0);
            m.sigma(t, xk, s);
            const double fk = z.f_at(t, xk);
            for (int j = 0; j < m.d; ++j) {
                s[j] *= fk;
                dw[j] = noise[i](k + 1, j) - noise[i](k, j);
            }
            double yn = detail::euler_step(y(k, 0), z.dtF_at(t, xk), dt, s.data(), dw.data(), m.d);
            const double tn = g.time(k + 1);
            if (!z.identity) {
                double a = z.y_min(tn), b = z.y_max(tn);
                if (yn < a || yn > b) {
                    exited[i] = 1;
                    yn = std::clamp(yn, a, b);
                }
            }
            y(k + 1, 0) = yn;
            x(k + 1, 0) = z.G_at(tn, yn);
        }
        sol.X.paths[i] = std::move(x);
        sol.Y.paths[i] = std::move(y);
    });
    for (char e : exited) sol.range_exits += e;
    sol.exit_fraction = static_cast<double>(sol.range_exits) / static_cast<double>(noise.size());
    return sol;
}

struct LipschitzCheck {
    std::string name;
    double measured = 0.0;
    double bound = 0.0;
    bool holds() const { return measured <= bound * (1.0 + 1e-9) + 1e-12; }
};

// Maximal difference quotients over the lattice for the maps used by the
// transformed dynamics. Two bound families are reported: "exact" uses the true
// range exp(-2c1) <= f <= exp(2c1) of f = exp(-2 int beta); "literal" uses the
// range exp(-c1) <= f <= exp(c1).
struct TableLipschitzReport {
    std::vector<LipschitzCheck> exact;
    std::vector<LipschitzCheck> literal;
    double f_min = 0.0, f_max = 0.0;
    double max_FG_error = 0.0;  // sup |F(G(y)) - y|
    double max_GF_error = 0.0;  // sup |G(F(x)) - x|
    bool exact_hold() const {
        return std::all_of(exact.begin(), exact.end(), [](const auto& c) { return c.holds(); });
    }
    bool literal_hold() const {
        return std::all_of(literal.begin(), literal.end(), [](const auto& c) { return c.holds(); });
    }
};

inline TableLipschitzReport table_lipschitz(const SdeModel& m, const ZvonkinTransform& z, const SdeConstants& c,
                                            int n_probe = 2001) {
    TableLipschitzReport r;
    double LF = 0, LG = 0, Lf = 0, LfG = 0, LsG = 0;
    r.f_min = std::numeric_limits<double>::infinity();
    r.f_max = 0.0;
    std::vector<double> s(m.d), s2(m.d);
    auto sig_norm_diff = [&](double t, double xa, double xb) {
        m.sigma(t, xa, s);
        m.sigma(t, xb, s2);
        double v = 0.0;
        for (int j = 0; j < m.d; ++j) v += (s[j] - s2[j]) * (s[j] - s2[j]);
        return std::sqrt(v);
    };
    for (int j = 0; j <= z.n_t; ++j) {
        const double t = z.t_at(j);
        for (int i = 0; i < z.n_x; ++i) {
            double fv = z.identity ? 1.0 : z.f[z.idx(j, i)];
            r.f_min = std::min(r.f_min, fv);
            r.f_max = std::max(r.f_max, fv);
        }
        if (z.identity) {
            LF = LG = std::max(LF, 1.0);
            continue;
        }
        for (int i = 0; i + 1 < z.n_x; ++i) {
            LF = std::max(LF, std::abs(z.F[z.idx(j, i + 1)] - z.F[z.idx(j, i)]) / z.dx);
            Lf = std::max(Lf, std::abs(z.f[z.idx(j, i + 1)] - z.f[z.idx(j, i)]) / z.dx);
            double xa = z.x_at(i);
            r.max_GF_error = std::max(r.max_GF_error, std::abs(z.G_at(t, z.F_at(t, xa)) - xa));
        }
        const double ya = z.y_min(t), yb = z.y_max(t), hy = (yb - ya) / (n_probe - 1);
        double gp = z.G_at(t, ya), fgp = z.f_at(t, gp);
        for (int k = 1; k < n_probe; ++k) {
            double y = ya + hy * k;
            double gv = z.G_at(t, y), fgv = z.f_at(t, gv);
            r.max_FG_error = std::max(r.max_FG_error, std::abs(z.F_at(t, gv) - y));
            LG = std::max(LG, std::abs(gv - gp) / hy);
            LfG = std::max(LfG, std::abs(fgv - fgp) / hy);
            LsG = std::max(LsG, sig_norm_diff(t, gv, gp) / hy);
            gp = gv;
            fgp = fgv;
        }
    }
    const double e1 = std::exp(c.c1), e2 = std::exp(2.0 * c.c1), e4 = std::exp(4.0 * c.c1);
    r.literal = {{"F", LF, e1}, {"G", LG, e1}, {"f", Lf, c.c2 * e1}, {"f(G)", LfG, c.c2 * e2},
                 {"sigma(G)", LsG, m.L_sigma * e1}};
    r.exact = {{"F", LF, e2}, {"G", LG, e2}, {"f", Lf, 2.0 * c.c2 * e2}, {"f(G)", LfG, 2.0 * c.c2 * e4},
               {"sigma(G)", LsG, m.L_sigma * e2}};
    return r;
}

// Normalized density proportional to exp(-lambda U) on xs. The normalizing
// integral is computed over [-L, L] with L doubled until it settles.
inline std::vector<double> stationary_density(const std::function<double(double)>& U, double lambda,
                                              const std::vector<double>& xs) {
    if (!(lambda > 0.0)) throw std::invalid_argument("stationary_density: lambda must be positive");
    auto w = [&](double x) {
        double u = U(x);
        return std::isinf(u) && u > 0 ? 0.0 : std::exp(-lambda * u);
    };
    auto integrate = [&](double a, double b) {
        const int n = 200000;  // even, Simpson
        double h = (b - a) / n, s = w(a) + w(b);
        for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * w(a + h * i);
        return s * h / 3.0;
    };
    double L = 8.0, Z = integrate(-L, L);
    for (int it = 0;; ++it) {
        double tail = integrate(L, 2.0 * L) + integrate(-2.0 * L, -L);
        if (!std::isfinite(tail) || it > 12)
            throw std::domain_error("stationary_density: exp(-lambda U) does not appear integrable");
        Z += tail;
        L *= 2.0;
        if (tail <= 1e-13 * Z) break;
    }
    if (!(Z > 0.0)) throw std::domain_error("stationary_density: zero normalizing mass");
    std::vector<double> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = w(xs[i]) / Z;
    return out;
}

// Normalized histogram of all path values at grid indices first, first+stride, ...
inline std::vector<double> occupancy_histogram(const PathBundle& b, std::size_t first, std::size_t stride,
                                               const std::vector<double>& edges) {
    std::vector<double> h(edges.size() - 1, 0.0);
    double total = 0.0;
    for (const auto& p : b.paths)
        for (std::size_t k = first; k < p.rows(); k += stride) {
            double x = p(k, 0);
            total += 1.0;
            if (x < edges.front() || x >= edges.back()) continue;
            auto it = std::upper_bound(edges.begin(), edges.end(), x);
            h[static_cast<std::size_t>(it - edges.begin()) - 1] += 1.0;
        }
    for (auto& v : h) v /= total;
    return h;
}

}  // namespace pathineq
