#pragma once

// Catoni's M-estimator of the mean and the RIPS linear estimator built on it.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "geometry.hpp"

namespace safebai {

class InsufficientSamplesError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Odd influence function: sign(y) * log(1 + |y| + y^2).
inline double catoni_psi(double y) {
    const double a = std::abs(y);
    const double v = std::log1p(a + a * a);
    return y < 0.0 ? -v : v;
}

inline double catoni_psi_derivative(double y) {
    const double a = std::abs(y);
    return (1.0 + 2.0 * a) / (1.0 + a + a * a);
}

struct CatoniConfig {
    double alpha = 1.0;
    double root_tol = 1e-10;
    int max_iter = 200;
};

inline double catoni_alpha(std::size_t n, double delta, double variance_bound) {
    return std::sqrt(2.0 * std::log(1.0 / delta) / (static_cast<double>(n) * variance_bound));
}

namespace detail {

/// Root of z -> sum_t psi(alpha (x_t - z)) + n_zero * psi(-alpha z), where the
/// n_zero extra samples are exact zeros. Safeguarded Newton inside the
/// bracket [min - 1/alpha, max + 1/alpha].
inline double catoni_root(std::span<const double> xs, std::size_t n_zero, const CatoniConfig& cfg) {
    const double a = cfg.alpha;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    double sum = 0.0;
    for (double x : xs) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
        sum += x;
    }
    if (n_zero > 0) {
        lo = std::min(lo, 0.0);
        hi = std::max(hi, 0.0);
    }
    const double n = static_cast<double>(xs.size() + n_zero);
    if (lo == hi) return lo;
    lo -= 1.0 / a;
    hi += 1.0 / a;

    auto eval = [&](double z, double& deriv) {
        double f = 0.0;
        double df = 0.0;
        for (double x : xs) {
            const double u = a * (x - z);
            f += catoni_psi(u);
            df += catoni_psi_derivative(u);
        }
        if (n_zero > 0) {
            const double u = -a * z;
            f += static_cast<double>(n_zero) * catoni_psi(u);
            df += static_cast<double>(n_zero) * catoni_psi_derivative(u);
        }
        deriv = -a * df;
        return f;
    };

    double z = std::clamp(sum / n, lo, hi);
    for (int it = 0; it < cfg.max_iter; ++it) {
        double df = 0.0;
        const double f = eval(z, df);
        if (f == 0.0) return z;
        if (f > 0.0) lo = z; else hi = z;
        double next = (df < 0.0) ? z - f / df : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        const double step = std::abs(next - z);
        z = next;
        if (step <= cfg.root_tol || hi - lo <= cfg.root_tol) break;
    }
    return z;
}

}  // namespace detail

/// Catoni estimate with alpha = sqrt(2 log(1/delta) / (T variance_bound)).
inline double catoni_estimate(std::span<const double> samples, double delta, double variance_bound,
                              double root_tol = 1e-10) {
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("catoni_estimate: delta must lie in (0, 1)");
    if (!(variance_bound > 0.0) || !std::isfinite(variance_bound))
        throw std::invalid_argument("catoni_estimate: variance_bound must be positive");
    if (samples.empty() || static_cast<double>(samples.size()) < 4.0 * std::log(1.0 / delta))
        throw InsufficientSamplesError("catoni_estimate: need T >= 4 log(1/delta)");
    for (double x : samples)
        if (!std::isfinite(x)) throw std::invalid_argument("catoni_estimate: non-finite sample");
    CatoniConfig cfg;
    cfg.alpha = catoni_alpha(samples.size(), delta, variance_bound);
    cfg.root_tol = root_tol;
    return detail::catoni_root(samples, 0, cfg);
}

/// Observations grouped by the arm that produced them, in arrival order.
struct ArmSamples {
    std::vector<std::vector<double>> by_arm;
    std::size_t total = 0;

    explicit ArmSamples(std::size_t n_arms = 0) : by_arm(n_arms) {}

    void add(std::size_t arm, double value) {
        by_arm.at(arm).push_back(value);
        ++total;
    }

    static ArmSamples from_pairs(std::span<const std::pair<std::size_t, double>> obs, std::size_t n_arms) {
        ArmSamples s(n_arms);
        for (const auto& [arm, v] : obs) s.add(arm, v);
        return s;
    }
};

struct RipsConfig {
    double variance_scale = 2.0;   // Catoni variance bound = variance_scale * ||y||^2_{A^-1}
    double ridge = 1e-9;
    int projection_iters = 500;
    int stall_iters = 100;
    double root_tol = 1e-10;
};

struct RipsEstimate {
    Vector theta_hat;
    Vector per_direction_width;
    Vector w;                // per-direction Catoni estimates W^y
    Vector direction_norm;   // ||y||_{A(lambda)^-1}
    double minimax_residual = 0.0;
    double least_squares_residual = 0.0;
};

inline double rips_width_factor(std::size_t T, std::size_t n_dirs, double delta) {
    return std::sqrt(8.0 * std::log(2.0 * static_cast<double>(n_dirs) / delta) / static_cast<double>(T));
}

namespace detail {

inline double normalized_residual(const Matrix& yn, const Vector& wn, const Vector& theta, Eigen::Index* arg = nullptr,
                                  double* sign = nullptr) {
    const Vector r = yn.transpose() * theta - wn;
    Eigen::Index k = 0;
    const double v = r.cwiseAbs().maxCoeff(&k);
    if (arg) *arg = k;
    if (sign) *sign = r[k] >= 0.0 ? 1.0 : -1.0;
    return v;
}

/// argmin_theta max_k |theta^T yn_k - wn_k| from the least-squares start,
/// by normalized subgradient steps of length f0 / sqrt(k); best iterate kept.
inline Vector minimax_fit(const Matrix& yn, const Vector& wn, const RipsConfig& cfg, double& best_val, double& ls_val) {
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(yn.transpose());
    Vector theta = cod.solve(wn);
    ls_val = normalized_residual(yn, wn, theta);
    best_val = ls_val;
    Vector best = theta;
    if (ls_val <= 1e-14) return best;
    const double scale = ls_val;
    int since_improve = 0;
    for (int k = 1; k <= cfg.projection_iters; ++k) {
        Eigen::Index idx = 0;
        double sgn = 1.0;
        normalized_residual(yn, wn, theta, &idx, &sgn);
        const Vector g = sgn * yn.col(idx);
        const double gn = g.norm();
        if (gn == 0.0) break;
        theta -= (scale / std::sqrt(static_cast<double>(k))) * g / (gn * gn);
        const double v = normalized_residual(yn, wn, theta);
        if (v < best_val - 1e-15) {
            best_val = v;
            best = theta;
            since_improve = 0;
        } else if (++since_improve >= cfg.stall_iters) {
            break;
        }
    }
    return best;
}

}  // namespace detail

/// Robust inverse-propensity estimate of theta from samples drawn with x ~ lambda.
///
/// `lambda` must be the distribution actually used for sampling. Each
/// direction gets a Catoni estimate at confidence delta / (2|Y|); theta_hat is
/// the minimax-consistent fit of those estimates.
inline RipsEstimate rips_estimate(const ArmSamples& samples, const SimplexWeights& lambda, const ArmMatrix& arms_X,
                                  const Matrix& directions_Y, double delta, const RipsConfig& cfg = {}) {
    if (directions_Y.cols() == 0) throw std::invalid_argument("rips_estimate: no directions");
    if (directions_Y.rows() != arms_X.rows()) throw std::invalid_argument("rips_estimate: dimension mismatch");
    if (samples.by_arm.size() != static_cast<std::size_t>(arms_X.cols()))
        throw std::invalid_argument("rips_estimate: samples do not match arm set");
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("rips_estimate: delta must lie in (0, 1)");
    const auto n_dirs = static_cast<std::size_t>(directions_Y.cols());
    const std::size_t T = samples.total;
    if (static_cast<double>(T) < 4.0 * std::log(2.0 * static_cast<double>(n_dirs) / delta))
        throw InsufficientSamplesError("rips_estimate: need T >= 4 log(2|Y|/delta)");
    for (Eigen::Index j = 0; j < directions_Y.cols(); ++j)
        if (directions_Y.col(j).squaredNorm() == 0.0) throw std::invalid_argument("rips_estimate: zero direction in Y");

    const InfoMatrix A = info_matrix(lambda, arms_X, cfg.ridge);
    const Matrix ainv_y = A.solve(directions_Y);                  // d x |Y|
    const Matrix coeff = ainv_y.transpose() * arms_X;             // |Y| x |X|
    const Vector norms_sq = (directions_Y.array() * ainv_y.array()).colwise().sum().transpose().cwiseMax(0.0);

    const double delta_dir = delta / (2.0 * static_cast<double>(n_dirs));
    RipsEstimate out;
    out.w.resize(static_cast<Eigen::Index>(n_dirs));
    out.direction_norm = norms_sq.cwiseSqrt();
    std::vector<double> buf;
    buf.reserve(T);
    for (std::size_t k = 0; k < n_dirs; ++k) {
        const auto ki = static_cast<Eigen::Index>(k);
        const double cmax = coeff.row(ki).cwiseAbs().maxCoeff();
        buf.clear();
        std::size_t used = 0;
        for (Eigen::Index x = 0; x < arms_X.cols(); ++x) {
            const double c = coeff(ki, x);
            if (std::abs(c) <= 1e-14 * cmax) continue;
            const auto& vals = samples.by_arm[static_cast<std::size_t>(x)];
            for (double r : vals) buf.push_back(c * r);
            used += vals.size();
        }
        CatoniConfig cc;
        cc.alpha = catoni_alpha(T, delta_dir, cfg.variance_scale * norms_sq[ki]);
        cc.root_tol = cfg.root_tol;
        out.w[ki] = detail::catoni_root(buf, T - used, cc);
    }

    Matrix yn = directions_Y;
    Vector wn = out.w;
    for (Eigen::Index k = 0; k < yn.cols(); ++k) {
        const double s = out.direction_norm[k] > 0.0 ? out.direction_norm[k] : 1.0;
        yn.col(k) /= s;
        wn[k] /= s;
    }
    out.theta_hat = detail::minimax_fit(yn, wn, cfg, out.minimax_residual, out.least_squares_residual);
    out.per_direction_width = out.direction_norm * rips_width_factor(T, n_dirs, delta);
    return out;
}

}  // namespace safebai
