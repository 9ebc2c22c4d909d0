#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pathcore.hpp"

namespace pathineq {

enum class BasisKind { Polynomial, LocalAverage };

struct BasisConfig {
    BasisKind kind = BasisKind::Polynomial;
    int degree = 3;     // total degree of the polynomial basis
    int bins = 32;      // quantile bins of the local-average smoother
    double ridge = 1e-10;
    bool linear_tails = false;   // local average: extend the end segments linearly instead of flat
};

inline const char* to_string(BasisKind k) { return k == BasisKind::Polynomial ? "polynomial" : "local_average"; }

// Least-squares conditional-expectation estimator.
//
// Polynomial: standardized features, total-degree monomials, ridge-guarded
// normal equations, heteroskedasticity-robust (HC0) coefficient covariance.
// The degree is lowered until the design has full column rank.
//
// LocalAverage (one feature only): means over equal-count quantile bins,
// linearly interpolated between bin centres and held flat outside (or extended
// linearly when linear_tails is set). With flat tails each prediction is a
// convex combination of training targets.
class Regressor {
public:
    Regressor() = default;

    static Regressor fit(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, const BasisConfig& cfg) {
        if (X.rows() != Y.rows() || X.rows() < 1) throw std::invalid_argument("Regressor: bad sample shapes");
        Regressor r;
        r.cfg_ = cfg;
        r.nfeat_ = static_cast<int>(X.cols());
        r.nout_ = static_cast<int>(Y.cols());
        if (cfg.kind == BasisKind::LocalAverage) {
            if (X.cols() != 1) throw std::invalid_argument("Regressor: local-average basis takes one feature");
            r.fit_local(X, Y);
        } else {
            r.fit_poly(X, Y);
        }
        return r;
    }

    BasisKind kind() const { return cfg_.kind; }
    int degree_used() const { return degree_; }
    int degree_reductions() const { return reductions_; }
    int basis_size() const { return cfg_.kind == BasisKind::Polynomial ? static_cast<int>(exps_.size()) : nbins(); }
    int outputs() const { return nout_; }
    const Eigen::VectorXd& residual_rms() const { return resid_rms_; }

    void predict(const double* x, double* out) const {
        if (cfg_.kind == BasisKind::Polynomial) {
            Eigen::VectorXd phi = design_row(x);
            for (int c = 0; c < nout_; ++c) out[c] = phi.dot(beta_.col(c));
        } else {
            auto [b, lam] = locate(x[0]);
            for (int c = 0; c < nout_; ++c) out[c] = (1.0 - lam) * means_(b, c) + (b + 1 < nbins() ? lam * means_(b + 1, c) : 0.0);
        }
    }
    double predict1(const double* x, int col = 0) const {
        std::vector<double> out(nout_);
        predict(x, out.data());
        return out[col];
    }
    Eigen::MatrixXd predict(const Eigen::MatrixXd& X) const {
        Eigen::MatrixXd out(X.rows(), nout_);
        std::vector<double> row(X.cols()), o(nout_);
        for (Eigen::Index i = 0; i < X.rows(); ++i) {
            for (Eigen::Index j = 0; j < X.cols(); ++j) row[j] = X(i, j);
            predict(row.data(), o.data());
            for (int c = 0; c < nout_; ++c) out(i, c) = o[c];
        }
        return out;
    }

    // Estimated variance of the fitted conditional mean at x.
    double prediction_var(const double* x, int col = 0) const {
        if (cfg_.kind == BasisKind::Polynomial) {
            Eigen::VectorXd phi = design_row(x);
            return phi.dot(cov_[col] * phi);
        }
        auto [b, lam] = locate(x[0]);
        double v = (1.0 - lam) * (1.0 - lam) * var_(b, col);
        if (b + 1 < nbins()) v += lam * lam * var_(b + 1, col);
        return v;
    }

    // Estimated variance of the average of fitted values over the rows of X.
    double mean_prediction_var(const Eigen::MatrixXd& X, int col = 0) const {
        return weighted_prediction_var(X, Eigen::VectorXd::Constant(X.rows(), 1.0 / static_cast<double>(X.rows())), col);
    }

    // Estimated variance of sum_i w_i * fitted(x_i).
    double weighted_prediction_var(const Eigen::MatrixXd& X, const Eigen::VectorXd& w, int col = 0) const {
        std::vector<double> row(X.cols());
        if (cfg_.kind == BasisKind::Polynomial) {
            Eigen::VectorXd bar = Eigen::VectorXd::Zero(exps_.size());
            for (Eigen::Index i = 0; i < X.rows(); ++i) {
                for (Eigen::Index j = 0; j < X.cols(); ++j) row[j] = X(i, j);
                bar += w[i] * design_row(row.data());
            }
            return bar.dot(cov_[col] * bar);
        }
        Eigen::VectorXd wb = Eigen::VectorXd::Zero(nbins());
        for (Eigen::Index i = 0; i < X.rows(); ++i) {
            auto [b, lam] = locate(X(i, 0));
            wb[b] += (1.0 - lam) * w[i];
            if (b + 1 < nbins()) wb[b + 1] += lam * w[i];
        }
        return (wb.array().square() * var_.col(col).array()).sum();
    }

    Eigen::VectorXd design_row(const double* x) const {
        std::vector<double> s(kept_.size());
        for (std::size_t j = 0; j < kept_.size(); ++j) s[j] = (x[kept_[j]] - mean_[j]) / scale_[j];
        Eigen::VectorXd phi(exps_.size());
        for (std::size_t m = 0; m < exps_.size(); ++m) {
            double v = 1.0;
            for (std::size_t j = 0; j < kept_.size(); ++j)
                for (int e = 0; e < exps_[m][j]; ++e) v *= s[j];
            phi[m] = v;
        }
        return phi;
    }

private:
    int nbins() const { return static_cast<int>(centers_.size()); }

    std::pair<int, double> locate(double x) const {
        const int B = nbins();
        if (B == 1) return {0, 0.0};
        if (x <= centers_[0]) {
            if (!cfg_.linear_tails) return {0, 0.0};
            return {0, (x - centers_[0]) / (centers_[1] - centers_[0])};
        }
        if (x >= centers_[B - 1]) {
            if (!cfg_.linear_tails) return {B - 1, 0.0};
            return {B - 2, (x - centers_[B - 2]) / (centers_[B - 1] - centers_[B - 2])};
        }
        int b = static_cast<int>(std::upper_bound(centers_.begin(), centers_.end(), x) - centers_.begin()) - 1;
        double lam = (x - centers_[b]) / (centers_[b + 1] - centers_[b]);
        return {b, lam};
    }

    static std::vector<std::vector<int>> monomials(int p, int deg) {
        std::vector<std::vector<int>> out;
        std::vector<int> e(p, 0);
        for (int total = 0; total <= deg; ++total) {
            // all exponent vectors with sum == total, lexicographic
            std::function<void(int, int)> rec = [&](int j, int left) {
                if (j == p - 1) {
                    e[j] = left;
                    out.push_back(e);
                    return;
                }
                for (int a = left; a >= 0; --a) {
                    e[j] = a;
                    rec(j + 1, left - a);
                }
            };
            if (p == 0) {
                if (total == 0) out.push_back({});
            } else {
                rec(0, total);
            }
        }
        return out;
    }

    void fit_poly(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y) {
        const Eigen::Index n = X.rows();
        kept_.clear();
        mean_.clear();
        scale_.clear();
        for (Eigen::Index j = 0; j < X.cols(); ++j) {
            double m = X.col(j).mean();
            double sd = std::sqrt((X.col(j).array() - m).square().mean());
            if (sd > 1e-12 * (1.0 + std::abs(m))) {
                kept_.push_back(static_cast<int>(j));
                mean_.push_back(m);
                scale_.push_back(sd);
            }
        }
        degree_ = std::max(0, cfg_.degree);
        reductions_ = 0;
        Eigen::MatrixXd Phi;
        for (;;) {
            exps_ = monomials(static_cast<int>(kept_.size()), degree_);
            Phi.resize(n, static_cast<Eigen::Index>(exps_.size()));
            std::vector<double> row(X.cols());
            for (Eigen::Index i = 0; i < n; ++i) {
                for (Eigen::Index j = 0; j < X.cols(); ++j) row[j] = X(i, j);
                Phi.row(i) = design_row(row.data()).transpose();
            }
            if (degree_ == 0) break;
            Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Phi);
            qr.setThreshold(1e-10);
            if (qr.rank() == Phi.cols()) break;
            --degree_;
            ++reductions_;
        }
        const Eigen::Index K = Phi.cols();
        Eigen::MatrixXd A = Phi.transpose() * Phi;
        // ridge on everything but the constant term
        A.diagonal().tail(K - 1).array() += cfg_.ridge * static_cast<double>(n);
        Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
        beta_ = ldlt.solve(Phi.transpose() * Y);
        Eigen::MatrixXd resid = Y - Phi * beta_;
        Eigen::MatrixXd Ainv = ldlt.solve(Eigen::MatrixXd::Identity(K, K));
        cov_.assign(nout_, Eigen::MatrixXd());
        resid_rms_.resize(nout_);
        for (int c = 0; c < nout_; ++c) {
            Eigen::MatrixXd meat = Phi.transpose() * (Phi.array().colwise() * resid.col(c).array().square()).matrix();
            cov_[c] = Ainv * meat * Ainv;
            resid_rms_[c] = std::sqrt(resid.col(c).squaredNorm() / static_cast<double>(n));
        }
    }

    void fit_local(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y) {
        const std::size_t n = static_cast<std::size_t>(X.rows());
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return X(a, 0) < X(b, 0); });
        const std::size_t B = std::max<std::size_t>(1, std::min<std::size_t>(cfg_.bins, n));
        struct Bin {
            double sx = 0;
            Eigen::VectorXd sy, syy;
            double cnt = 0;
        };
        std::vector<Bin> bins;
        for (std::size_t b = 0; b < B; ++b) {
            std::size_t lo = b * n / B, hi = (b + 1) * n / B;
            if (lo == hi) continue;
            Bin bin;
            bin.sy = Eigen::VectorXd::Zero(nout_);
            bin.syy = Eigen::VectorXd::Zero(nout_);
            for (std::size_t k = lo; k < hi; ++k) {
                bin.sx += X(idx[k], 0);
                bin.sy += Y.row(idx[k]).transpose();
                bin.syy += Y.row(idx[k]).transpose().array().square().matrix();
                bin.cnt += 1;
            }
            // merge with the previous bin when the centres coincide (ties in x)
            if (!bins.empty() && bins.back().sx / bins.back().cnt >= bin.sx / bin.cnt) {
                bins.back().sx += bin.sx;
                bins.back().sy += bin.sy;
                bins.back().syy += bin.syy;
                bins.back().cnt += bin.cnt;
            } else {
                bins.push_back(std::move(bin));
            }
        }
        const int nb = static_cast<int>(bins.size());
        centers_.resize(nb);
        means_.resize(nb, nout_);
        var_.resize(nb, nout_);
        for (int b = 0; b < nb; ++b) {
            centers_[b] = bins[b].sx / bins[b].cnt;
            for (int c = 0; c < nout_; ++c) {
                double m = bins[b].sy[c] / bins[b].cnt;
                means_(b, c) = m;
                double s2 = bins[b].cnt > 1 ? std::max(0.0, (bins[b].syy[c] - bins[b].cnt * m * m) / (bins[b].cnt - 1)) : 0.0;
                var_(b, c) = s2 / bins[b].cnt;
            }
        }
        degree_ = 0;
        reductions_ = 0;
        resid_rms_ = Eigen::VectorXd::Zero(nout_);
        std::vector<double> o(nout_);
        for (std::size_t i = 0; i < n; ++i) {
            double x = X(i, 0);
            predict(&x, o.data());
            for (int c = 0; c < nout_; ++c) resid_rms_[c] += (Y(i, c) - o[c]) * (Y(i, c) - o[c]);
        }
        resid_rms_ = (resid_rms_ / static_cast<double>(n)).cwiseSqrt();
    }

    BasisConfig cfg_{};
    int nfeat_ = 0, nout_ = 0, degree_ = 0, reductions_ = 0;
    std::vector<int> kept_;
    std::vector<double> mean_, scale_;
    std::vector<std::vector<int>> exps_;
    Eigen::MatrixXd beta_;
    std::vector<Eigen::MatrixXd> cov_;
    std::vector<double> centers_;
    Eigen::MatrixXd means_, var_;
    Eigen::VectorXd resid_rms_;
};

// Regression features read from a path prefix.
enum class FeatureMap { Markov, Extrema };

inline int feature_count(FeatureMap f, int d) { return f == FeatureMap::Markov ? d : 3 * d; }

// Markov: the current value. Extrema: current value, running max and running
// min, coordinate by coordinate.
inline void extract_features(FeatureMap f, const Path& p, std::size_t k, double* out) {
    const int d = p.dim();
    for (int j = 0; j < d; ++j) out[j] = p(k, j);
    if (f == FeatureMap::Markov) return;
    for (int j = 0; j < d; ++j) {
        double hi = p(0, j), lo = p(0, j);
        for (std::size_t r = 1; r <= k; ++r) {
            hi = std::max(hi, p(r, j));
            lo = std::min(lo, p(r, j));
        }
        out[d + j] = hi;
        out[2 * d + j] = lo;
    }
}

inline Eigen::MatrixXd slice_features(FeatureMap f, const PathBundle& b, std::size_t k) {
    Eigen::MatrixXd X(b.size(), feature_count(f, b.dim));
    std::vector<double> row(X.cols());
    for (std::size_t i = 0; i < b.size(); ++i) {
        extract_features(f, b[i], k, row.data());
        for (Eigen::Index j = 0; j < X.cols(); ++j) X(i, j) = row[j];
    }
    return X;
}

}  // namespace pathineq
