#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "assignment.hpp"
#include "parallel.hpp"
#include "pathcore.hpp"

namespace pathineq {

// Atoms are flat vectors split into `blocks` blocks of `block_dim` coordinates.
// The ground metric is the max over blocks of the Euclidean norm in a block, so
// a path on a grid (blocks = grid points) gets the sup norm and a point of R^m
// (one block) gets the Euclidean norm.
class EmpiricalMeasure {
public:
    EmpiricalMeasure() = default;
    EmpiricalMeasure(std::size_t blocks, std::size_t block_dim, std::vector<std::vector<double>> atoms,
                     std::vector<double> weights = {})
        : blocks_(blocks), block_dim_(block_dim), atoms_(std::move(atoms)), weights_(std::move(weights)) {
        if (atoms_.empty()) throw std::invalid_argument("EmpiricalMeasure: no atoms");
        for (const auto& a : atoms_)
            if (a.size() != blocks_ * block_dim_) throw std::invalid_argument("EmpiricalMeasure: atom size mismatch");
        if (weights_.empty()) {
            weights_.assign(atoms_.size(), 1.0 / static_cast<double>(atoms_.size()));
            uniform_ = true;
        } else {
            if (weights_.size() != atoms_.size()) throw std::invalid_argument("EmpiricalMeasure: weight count");
            double s = 0.0;
            for (double w : weights_) {
                if (!(w >= 0.0)) throw std::invalid_argument("EmpiricalMeasure: negative weight");
                s += w;
            }
            if (std::abs(s - 1.0) > 1e-12) throw std::invalid_argument("EmpiricalMeasure: weights must sum to 1");
            const double w0 = weights_[0];
            uniform_ = std::all_of(weights_.begin(), weights_.end(), [&](double w) { return w == w0; });
        }
    }

    static EmpiricalMeasure from_bundle(const PathBundle& b) {
        std::vector<std::vector<double>> atoms;
        atoms.reserve(b.size());
        for (const auto& p : b.paths) atoms.push_back(p.values());
        return EmpiricalMeasure(b.grid.size(), static_cast<std::size_t>(b.dim), std::move(atoms));
    }
    static EmpiricalMeasure from_points(const std::vector<std::vector<double>>& pts) {
        if (pts.empty()) throw std::invalid_argument("EmpiricalMeasure: no atoms");
        return EmpiricalMeasure(1, pts[0].size(), pts);
    }
    static EmpiricalMeasure from_scalars(const std::vector<double>& xs) {
        std::vector<std::vector<double>> pts;
        pts.reserve(xs.size());
        for (double x : xs) pts.push_back({x});
        return EmpiricalMeasure(1, 1, std::move(pts));
    }

    std::size_t size() const { return atoms_.size(); }
    bool uniform() const { return uniform_; }
    const std::vector<double>& weights() const { return weights_; }
    const std::vector<double>& atom(std::size_t i) const { return atoms_[i]; }
    std::size_t blocks() const { return blocks_; }
    std::size_t block_dim() const { return block_dim_; }

    double distance(const std::vector<double>& a, const std::vector<double>& b) const {
        double best = 0.0;
        for (std::size_t k = 0; k < blocks_; ++k) {
            double s = 0.0;
            for (std::size_t j = 0; j < block_dim_; ++j) {
                double e = a[k * block_dim_ + j] - b[k * block_dim_ + j];
                s += e * e;
            }
            best = std::max(best, s);
        }
        return std::sqrt(best);
    }

    EmpiricalMeasure subset(const std::vector<std::size_t>& idx) const {
        std::vector<std::vector<double>> atoms;
        atoms.reserve(idx.size());
        for (auto i : idx) atoms.push_back(atoms_[i]);
        return EmpiricalMeasure(blocks_, block_dim_, std::move(atoms));
    }

private:
    std::size_t blocks_ = 1, block_dim_ = 1;
    std::vector<std::vector<double>> atoms_;
    std::vector<double> weights_;
    bool uniform_ = true;
};

inline void check_compatible(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
    if (a.blocks() != b.blocks() || a.block_dim() != b.block_dim())
        throw std::invalid_argument("transport: supports live in different spaces");
}

inline Eigen::MatrixXd cost_matrix(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double p) {
    check_compatible(mu, nu);
    Eigen::MatrixXd C(mu.size(), nu.size());
    parallel_for(mu.size(), [&](std::size_t i) {
        for (std::size_t j = 0; j < nu.size(); ++j) {
            double d = mu.distance(mu.atom(i), nu.atom(j));
            C(i, j) = p == 1.0 ? d : (p == 2.0 ? d * d : std::pow(d, p));
        }
    });
    return C;
}

struct TransportPlan {
    Eigen::MatrixXd coupling;
    std::vector<int> assignment;  // filled by the exact solver only

    double marginal_violation(const std::vector<double>& a, const std::vector<double>& b) const {
        double worst = 0.0;
        for (Eigen::Index i = 0; i < coupling.rows(); ++i)
            worst = std::max(worst, std::abs(coupling.row(i).sum() - a[i]));
        for (Eigen::Index j = 0; j < coupling.cols(); ++j)
            worst = std::max(worst, std::abs(coupling.col(j).sum() - b[j]));
        return worst;
    }
    bool feasible(const std::vector<double>& a, const std::vector<double>& b, double tol = 1e-9) const {
        return (coupling.array() >= 0.0).all() && marginal_violation(a, b) <= tol;
    }

    void write_csv(std::ostream& os) const {
        os << "row,col,mass\n";
        for (Eigen::Index i = 0; i < coupling.rows(); ++i)
            for (Eigen::Index j = 0; j < coupling.cols(); ++j)
                if (coupling(i, j) != 0.0) os << i << "," << j << "," << coupling(i, j) << "\n";
    }
};

struct SinkhornConfig {
    double tol = 1e-7;
    int max_iter = 20000;
};

struct SinkhornResult {
    double value = 0.0;  // entropic cost (dual objective)
    bool converged = false;
    int iterations = 0;
    double violation = 0.0;
    Eigen::VectorXd f, g;
};

namespace detail {
inline double logsumexp(const double* v, std::size_t n) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) m = std::max(m, v[i]);
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - m);
    return m + std::log(s);
}
}  // namespace detail

// Log-domain Sinkhorn on a fixed cost matrix.
inline SinkhornResult sinkhorn(const Eigen::MatrixXd& C, const std::vector<double>& a, const std::vector<double>& b,
                               double eps, const SinkhornConfig& cfg = {}) {
    if (!(eps > 0.0)) throw std::invalid_argument("sinkhorn: eps must be positive");
    const std::size_t n = C.rows(), m = C.cols();
    std::vector<double> la(n), lb(m);
    for (std::size_t i = 0; i < n; ++i) la[i] = std::log(a[i]);
    for (std::size_t j = 0; j < m; ++j) lb[j] = std::log(b[j]);
    SinkhornResult r;
    r.f = Eigen::VectorXd::Zero(n);
    r.g = Eigen::VectorXd::Zero(m);
    std::vector<double> buf(std::max(n, m));
    Eigen::VectorXd fn(n);
    auto update_f = [&](double e) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < m; ++j) buf[j] = lb[j] + (r.g[j] - C(i, j)) / e;
            fn[i] = -e * detail::logsumexp(buf.data(), m);
        }
    };
    auto update_g = [&](double e) {
        for (std::size_t j = 0; j < m; ++j) {
            for (std::size_t i = 0; i < n; ++i) buf[i] = la[i] + (r.f[i] - C(i, j)) / e;
            r.g[j] = -e * detail::logsumexp(buf.data(), n);
        }
    };
    update_f(eps);
    r.f = fn;
    for (int it = 1; it <= cfg.max_iter; ++it) {
        update_g(eps);
        // With g fresh the column marginals are exact; row i of the plan has mass
        // a_i exp((f_i - f_next_i)/eps), so the next f update measures the defect.
        update_f(eps);
        double viol = 0.0;
        for (std::size_t i = 0; i < n; ++i) viol += a[i] * std::abs(std::expm1((r.f[i] - fn[i]) / eps));
        r.iterations = it;
        r.violation = viol;
        if (viol < cfg.tol) {
            r.converged = true;
            break;
        }
        r.f = fn;
    }
    double v = 0.0;
    for (std::size_t i = 0; i < n; ++i) v += a[i] * r.f[i];
    for (std::size_t j = 0; j < m; ++j) v += b[j] * r.g[j];
    r.value = v;
    return r;
}

// Self-transport OT_eps(mu, mu) with the averaged symmetric update, which
// avoids the slow two-cycle of the plain alternating scheme.
inline SinkhornResult sinkhorn_symmetric(const Eigen::MatrixXd& C, const std::vector<double>& a, double eps,
                                         const SinkhornConfig& cfg = {}) {
    if (!(eps > 0.0)) throw std::invalid_argument("sinkhorn: eps must be positive");
    const std::size_t n = C.rows();
    std::vector<double> la(n), buf(n);
    for (std::size_t i = 0; i < n; ++i) la[i] = std::log(a[i]);
    SinkhornResult r;
    r.f = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd tf(n);
    for (int it = 1; it <= cfg.max_iter; ++it) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) buf[j] = la[j] + (r.f[j] - C(i, j)) / eps;
            tf[i] = -eps * detail::logsumexp(buf.data(), n);
        }
        double viol = 0.0;
        for (std::size_t i = 0; i < n; ++i) viol += a[i] * std::abs(std::expm1((r.f[i] - tf[i]) / eps));
        r.iterations = it;
        r.violation = viol;
        if (viol < cfg.tol) {
            r.converged = true;
            break;
        }
        r.f = 0.5 * (r.f + tf);
    }
    r.g = r.f;
    double v = 0.0;
    for (std::size_t i = 0; i < n; ++i) v += 2.0 * a[i] * r.f[i];
    r.value = v;
    return r;
}

struct EntropicResult {
    double value = 0.0;  // debiased, floored at 0, then p-th root
    double divergence = 0.0;  // debiased value before flooring
    bool converged = false;
    double eps = 0.0;
};

inline double median_cost(const Eigen::MatrixXd& C) {
    std::vector<double> v(C.data(), C.data() + C.size());
    auto mid = v.begin() + v.size() / 2;
    std::nth_element(v.begin(), mid, v.end());
    return *mid;
}

inline bool same_measure(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
    if (a.size() != b.size() || a.blocks() != b.blocks() || a.block_dim() != b.block_dim()) return false;
    if (a.weights() != b.weights()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a.atom(i) != b.atom(i)) return false;
    return true;
}

inline EntropicResult wasserstein_entropic(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double p,
                                           double eps, const SinkhornConfig& cfg = {}) {
    if (!(eps > 0.0)) throw std::invalid_argument("wasserstein_entropic: eps must be positive");
    auto xx = sinkhorn_symmetric(cost_matrix(mu, mu, p), mu.weights(), eps, cfg);
    auto yy = sinkhorn_symmetric(cost_matrix(nu, nu, p), nu.weights(), eps, cfg);
    // identical measures: the alternating scheme crawls there, the symmetric one does not
    auto xy = same_measure(mu, nu) ? xx : sinkhorn(cost_matrix(mu, nu, p), mu.weights(), nu.weights(), eps, cfg);
    EntropicResult r;
    r.eps = eps;
    r.divergence = xy.value - 0.5 * xx.value - 0.5 * yy.value;
    r.value = std::pow(std::max(r.divergence, 0.0), 1.0 / p);
    r.converged = xy.converged && xx.converged && yy.converged;
    return r;
}

struct ExactConfig {
    std::size_t n_max = 2048;
    double fallback_eps_factor = 0.01;  // entropic eps as a fraction of the median cost
};

struct WassersteinResult {
    double value = 0.0;
    TransportPlan plan;
    bool routed_to_entropic = false;
    bool converged = true;
};

inline WassersteinResult wasserstein_exact(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double p,
                                           const ExactConfig& cfg = {}) {
    if (p != 1.0 && p != 2.0) throw std::invalid_argument("wasserstein_exact: p must be 1 or 2");
    if (mu.size() > cfg.n_max || nu.size() > cfg.n_max)
        throw std::invalid_argument("wasserstein_exact: support larger than n_max");
    WassersteinResult r;
    Eigen::MatrixXd C = cost_matrix(mu, nu, p);
    if (mu.size() != nu.size() || !mu.uniform() || !nu.uniform()) {
        double eps = cfg.fallback_eps_factor * std::max(median_cost(C), 1e-300);
        auto e = wasserstein_entropic(mu, nu, p, eps);
        r.value = e.value;
        r.routed_to_entropic = true;
        r.converged = e.converged;
        return r;
    }
    const std::size_t n = mu.size();
    auto a = solve_assignment(C);
    r.value = std::pow(a.cost / static_cast<double>(n), 1.0 / p);
    r.plan.assignment = a.col_of_row;
    r.plan.coupling = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t i = 0; i < n; ++i) r.plan.coupling(i, a.col_of_row[i]) = 1.0 / static_cast<double>(n);
    return r;
}

// Enumerates all n! permutations. Test oracle for the assignment solver.
inline double brute_force_w2_small(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
    if (mu.size() != nu.size() || !mu.uniform() || !nu.uniform())
        throw std::invalid_argument("brute_force_w2_small: needs uniform measures of equal size");
    const std::size_t n = mu.size();
    if (n > 8) throw std::invalid_argument("brute_force_w2_small: n must be <= 8");
    Eigen::MatrixXd C = cost_matrix(mu, nu, 2.0);
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += C(i, perm[i]);
        best = std::min(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return std::sqrt(best / static_cast<double>(n));
}

enum class EntropyMethod { ClosedForm, MonteCarlo };

struct EntropyEstimate {
    double value = 0.0;
    double se = 0.0;
    EntropyMethod method = EntropyMethod::ClosedForm;
};

inline nlohmann::json to_json(const EntropyEstimate& e) {
    return {{"value", e.value},
            {"se", e.se},
            {"method", e.method == EntropyMethod::ClosedForm ? "closed_form" : "monte_carlo"}};
}

// H(Q|P) = (1/2) E_Q int |q|^2 dt, left-point quadrature on the grid.
inline EntropyEstimate girsanov_entropy(const GirsanovTilt& q, const TimeGrid& grid, std::size_t n_mc,
                                        std::uint64_t seed) {
    if (!q.bound) throw std::invalid_argument("girsanov_entropy: tilt '" + q.label + "' has no bound");
    const double dt = grid.dt();
    std::vector<double> qk(q.dim);
    if (q.kind == TiltKind::Deterministic) {
        Path zero(grid, q.dim);
        double s = 0.0;
        for (std::int64_t k = 0; k < grid.steps; ++k) {
            q.eval(PathView(zero, k), qk);
            for (double v : qk) s += v * v * dt;
        }
        return {0.5 * s, 0.0, EntropyMethod::ClosedForm};
    }
    if (n_mc < 2) throw std::invalid_argument("girsanov_entropy: adapted tilt needs n_mc >= 2");
    auto paths = sample_tilted_brownian(grid, q, n_mc, seed);
    std::vector<double> vals(n_mc);
    parallel_for(n_mc, [&](std::size_t i) {
        std::vector<double> buf(q.dim);
        double s = 0.0;
        for (std::int64_t k = 0; k < grid.steps; ++k) {
            q.eval(PathView(paths[i], k), buf);
            for (double v : buf) s += v * v * dt;
        }
        vals[i] = 0.5 * s;
    });
    double mean = std::accumulate(vals.begin(), vals.end(), 0.0) / n_mc;
    double var = 0.0;
    for (double v : vals) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n_mc - 1);
    return {mean, std::sqrt(var / n_mc), EntropyMethod::MonteCarlo};
}

inline double relative_entropy_discrete(const std::vector<double>& nu, const std::vector<double>& mu) {
    if (nu.size() != mu.size()) throw std::invalid_argument("relative_entropy_discrete: size mismatch");
    double h = 0.0;
    for (std::size_t i = 0; i < nu.size(); ++i) {
        if (nu[i] == 0.0) continue;
        if (mu[i] == 0.0) return std::numeric_limits<double>::infinity();
        h += nu[i] * std::log(nu[i] / mu[i]);
    }
    return h;
}

}  // namespace pathineq
