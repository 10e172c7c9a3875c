#pragma once

// Regularized transductive experiment design.
//
// A design problem asks for an allocation lambda over X and a power-of-two
// budget tau such that
//     max_t  -scale * offset_t + sqrt(||t||^2_{A(lambda~)^-1} * log_term / tau)  <=  threshold,
// where lambda~ = (1 - eta) lambda + eta * uniform. For fixed lambda the
// condition is equivalent to
//     tau >= log_term * max_t ||t||^2_{A^-1} / (threshold + scale * offset_t)^2,
// so the smallest feasible tau comes from one weighted minimax allocation
// problem, which is convex in lambda. That problem is solved by pairwise
// Frank-Wolfe on a log-sum-exp smoothing of the max.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include "geometry.hpp"

namespace safebai {

class DesignBudgetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Target vectors expressed through a small set of base vectors U: target k
/// is U_plus - U_minus, or U_plus alone when minus < 0. Pairwise-difference
/// targets then cost O(d) each instead of a fresh linear solve.
struct TargetSet {
    Matrix U;
    std::vector<std::pair<int, int>> refs;

    std::size_t size() const { return refs.size(); }

    Vector vector(std::size_t k) const {
        const auto [p, m] = refs[k];
        Vector v = U.col(p);
        if (m >= 0) v -= U.col(m);
        return v;
    }

    Matrix dense() const {
        Matrix out(U.rows(), static_cast<Eigen::Index>(refs.size()));
        for (std::size_t k = 0; k < refs.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = vector(k);
        return out;
    }

    static TargetSet columns(const Matrix& vs) {
        TargetSet t{vs, {}};
        for (Eigen::Index j = 0; j < vs.cols(); ++j) t.refs.emplace_back(static_cast<int>(j), -1);
        return t;
    }
};

struct AllocationOptions {
    double eta = 0.1;
    double ridge = 1e-9;
    int fw_iters = 200;
    double rel_gap_tol = 1e-4;
    std::vector<double> betas{20.0, 200.0, 2000.0};
};

/// Quadratic forms ||t||^2_{A(lambda~)^-1} for every target, plus the cross
/// terms x^T A^{-1} U used by the gradient.
class AllocationEvaluator {
public:
    AllocationEvaluator(const ArmMatrix& X, const TargetSet& targets, double eta, double ridge)
        : X_(X), targets_(targets), eta_(eta), ridge_(ridge) {
        if (X.rows() != targets.U.rows()) throw std::invalid_argument("allocation: dimension mismatch between arms and targets");
    }

    Eigen::Index n_arms() const { return X_.cols(); }
    double eta() const { return eta_; }

    SimplexWeights mixed(const SimplexWeights& lambda) const { return mix_with_uniform(lambda, eta_); }

    /// Returns q_k for every target; fills `cross` = X^T A^{-1} U when non-null.
    Vector quad(const SimplexWeights& lambda, Matrix* cross = nullptr) const {
        const InfoMatrix a = info_matrix(mixed(lambda), X_, ridge_);
        const Matrix au = a.solve(targets_.U);
        Vector q(static_cast<Eigen::Index>(targets_.size()));
        for (std::size_t k = 0; k < targets_.size(); ++k) {
            const auto [p, m] = targets_.refs[k];
            double v;
            if (m < 0) {
                v = targets_.U.col(p).dot(au.col(p));
            } else {
                v = (targets_.U.col(p) - targets_.U.col(m)).dot(au.col(p) - au.col(m));
            }
            q[static_cast<Eigen::Index>(k)] = std::max(0.0, v);
        }
        if (cross) *cross = X_.transpose() * au;
        return q;
    }

    /// d q_k / d lambda_x = -(1 - eta) (x^T A^{-1} t_k)^2.
    void accumulate_gradient(const Matrix& cross, std::size_t k, double weight, Vector& grad) const {
        const auto [p, m] = targets_.refs[k];
        if (m < 0) {
            grad.array() -= weight * (1.0 - eta_) * cross.col(p).array().square();
        } else {
            grad.array() -= weight * (1.0 - eta_) * (cross.col(p) - cross.col(m)).array().square();
        }
    }

private:
    const ArmMatrix& X_;
    const TargetSet& targets_;
    double eta_;
    double ridge_;
};

/// One group of (target index, weight) entries; the group's value is the
/// minimum of weight * q over its entries.
using AllocationGroup = std::vector<std::pair<std::size_t, double>>;

struct AllocationResult {
    SimplexWeights lambda;          // raw allocation; A is built from its eta-mixture
    double value = 0.0;             // max over groups of min over entries of weight * q
    std::vector<double> smoothed_trace;
    int iterations = 0;
};

namespace detail {

inline double group_objective(const std::vector<AllocationGroup>& groups, const Vector& q) {
    double worst = -std::numeric_limits<double>::infinity();
    for (const auto& g : groups) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& [k, w] : g) best = std::min(best, w * q[static_cast<Eigen::Index>(k)]);
        worst = std::max(worst, best);
    }
    return worst;
}

/// log-sum-exp smoothing of max_k softmin_j; optionally returns the mixing
/// weights p_k * pi_kj per (group, entry) for the gradient.
inline double smoothed_objective(const std::vector<AllocationGroup>& groups, const Vector& q, double temp,
                                 std::vector<std::vector<double>>* coef = nullptr) {
    std::vector<double> f(groups.size());
    std::vector<std::vector<double>> pi;
    if (coef) pi.resize(groups.size());
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const auto& grp = groups[g];
        double mn = std::numeric_limits<double>::infinity();
        for (const auto& [k, w] : grp) mn = std::min(mn, w * q[static_cast<Eigen::Index>(k)]);
        double s = 0.0;
        if (coef) pi[g].resize(grp.size());
        for (std::size_t j = 0; j < grp.size(); ++j) {
            const double e = std::exp(-(grp[j].second * q[static_cast<Eigen::Index>(grp[j].first)] - mn) / temp);
            s += e;
            if (coef) pi[g][j] = e;
        }
        f[g] = mn - temp * std::log(s);
        if (coef)
            for (double& e : pi[g]) e /= s;
    }
    const double mx = *std::max_element(f.begin(), f.end());
    double s = 0.0;
    std::vector<double> p(groups.size());
    for (std::size_t g = 0; g < groups.size(); ++g) {
        p[g] = std::exp((f[g] - mx) / temp);
        s += p[g];
    }
    if (coef) {
        coef->assign(groups.size(), {});
        for (std::size_t g = 0; g < groups.size(); ++g) {
            (*coef)[g].resize(groups[g].size());
            for (std::size_t j = 0; j < groups[g].size(); ++j) (*coef)[g][j] = p[g] / s * pi[g][j];
        }
    }
    return mx + temp * std::log(s);
}

}  // namespace detail

/// Minimizes max_groups min_entries weight * ||t||^2_{A(lambda~)^-1} over the
/// simplex. Entries with infinite weight are ignored; a group left empty makes
/// the objective +inf everywhere.
inline AllocationResult solve_allocation(const ArmMatrix& X, const TargetSet& targets,
                                         std::vector<AllocationGroup> groups, const AllocationOptions& opt,
                                         std::optional<SimplexWeights> start = std::nullopt) {
    const auto n = static_cast<std::size_t>(X.cols());
    if (n == 0) throw std::invalid_argument("solve_allocation: empty arm set");
    AllocationResult res;
    res.lambda = start ? *start : SimplexWeights::uniform(n);
    if (res.lambda.size() != n) throw std::invalid_argument("solve_allocation: start has wrong size");

    for (auto& g : groups) {
        std::erase_if(g, [](const auto& e) { return !std::isfinite(e.second); });
        for (const auto& [k, w] : g) {
            if (k >= targets.size()) throw std::invalid_argument("solve_allocation: target index out of range");
            if (w < 0.0) throw std::invalid_argument("solve_allocation: negative weight");
        }
    }
    if (groups.empty()) throw std::invalid_argument("solve_allocation: no targets");
    const AllocationEvaluator ev(X, targets, opt.eta, opt.ridge);
    for (const auto& g : groups) {
        if (g.empty()) {
            res.value = std::numeric_limits<double>::infinity();
            return res;
        }
    }

    Matrix cross;
    Vector q = ev.quad(res.lambda, &cross);
    res.value = detail::group_objective(groups, q);
    if (!(res.value > 0.0) || n == 1) return res;

    Vector lam = res.lambda.weights();
    const int per_stage = std::max(1, opt.fw_iters / static_cast<int>(std::max<std::size_t>(1, opt.betas.size())));
    for (double beta : opt.betas) {
        const double temp = res.value / beta;
        std::vector<std::vector<double>> coef;
        double cur = detail::smoothed_objective(groups, q, temp, &coef);
        res.smoothed_trace.push_back(cur);
        for (int it = 0; it < per_stage; ++it) {
            Vector grad = Vector::Zero(static_cast<Eigen::Index>(n));
            for (std::size_t g = 0; g < groups.size(); ++g)
                for (std::size_t j = 0; j < groups[g].size(); ++j) {
                    const double c = coef[g][j] * groups[g][j].second;
                    if (c > 1e-14) ev.accumulate_gradient(cross, groups[g][j].first, c, grad);
                }
            Eigen::Index s = 0;
            grad.minCoeff(&s);
            Eigen::Index a = -1;
            for (Eigen::Index x = 0; x < grad.size(); ++x)
                if (lam[x] > 0.0 && (a < 0 || grad[x] > grad[a])) a = x;
            const double fw_gap = grad.dot(lam) - grad[s];
            if (fw_gap <= opt.rel_gap_tol * std::abs(cur) || a == s) break;
            const double slope = grad[s] - grad[a];
            if (!(slope < 0.0)) break;

            double step = lam[a];
            bool accepted = false;
            Vector trial;
            Vector q_trial;
            double val = cur;
            for (int bt = 0; bt < 40; ++bt) {
                trial = lam;
                trial[s] += step;
                trial[a] -= step;
                if (trial[a] < 1e-15) {
                    trial[s] += trial[a];
                    trial[a] = 0.0;
                }
                q_trial = ev.quad(SimplexWeights::normalized(trial));
                val = detail::smoothed_objective(groups, q_trial, temp);
                if (val <= cur + 1e-4 * step * slope) {
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if (!accepted) break;
            lam = trial / trial.sum();
            const SimplexWeights lw(lam);
            q = ev.quad(lw, &cross);
            cur = detail::smoothed_objective(groups, q, temp, &coef);
            res.smoothed_trace.push_back(cur);
            ++res.iterations;
            const double truth = detail::group_objective(groups, q);
            if (truth < res.value) {
                res.value = truth;
                res.lambda = lw;
            }
        }
        // Continue the next stage from the best iterate so far.
        lam = res.lambda.weights();
        q = ev.quad(res.lambda, &cross);
    }
    return res;
}

// ---------------------------------------------------------------------------
// Design problems

struct DesignProblem {
    ArmMatrix arms_X;
    TargetSet targets;
    Vector offsets;
    double scale = 0.0;
    double log_term = 1.0;
    double threshold = 1.0;
    std::int64_t tau_min = 1;

    void validate() const {
        if (targets.size() == 0) throw std::invalid_argument("design: no targets");
        if (static_cast<std::size_t>(offsets.size()) != targets.size()) throw std::invalid_argument("design: |offsets| != |targets|");
        if ((offsets.array() < 0.0).any() || !offsets.allFinite()) throw std::invalid_argument("design: offsets must be finite and >= 0");
        if (!(threshold > 0.0)) throw std::invalid_argument("design: threshold must be positive");
        if (tau_min < 1) throw std::invalid_argument("design: tau_min must be >= 1");
        if (!(log_term > 0.0)) throw std::invalid_argument("design: log_term must be positive");
        if (scale < 0.0) throw std::invalid_argument("design: scale must be non-negative");
    }
};

struct DesignOptions {
    AllocationOptions allocation;
    std::int64_t tau_cap = std::int64_t{1} << 40;
};

struct Design {
    SimplexWeights lambda;       // after mixing; this is the sampling distribution
    SimplexWeights lambda_raw;   // before mixing
    std::int64_t tau = 1;
    double achieved_objective = 0.0;
    double tau_star = 0.0;       // continuous minimal budget at lambda
};

inline std::int64_t next_power_of_two(double v) {
    std::int64_t p = 1;
    while (static_cast<double>(p) < v) {
        if (p > (std::int64_t{1} << 61)) throw DesignBudgetError("power-of-two budget overflow");
        p <<= 1;
    }
    return p;
}

/// Objective at an allocation that is already the sampling distribution.
inline double design_objective_at(const DesignProblem& p, const SimplexWeights& lambda_tilde, double tau, double ridge = 1e-9) {
    const AllocationEvaluator ev(p.arms_X, p.targets, 0.0, ridge);
    const Vector q = ev.quad(lambda_tilde);
    double worst = -std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < q.size(); ++k)
        worst = std::max(worst, -p.scale * p.offsets[k] + std::sqrt(q[k] * p.log_term / tau));
    return worst;
}

/// Objective at a raw allocation: lambda is mixed with uniform first.
inline double design_objective(const DesignProblem& p, const SimplexWeights& lambda, double tau, double eta = 0.1,
                               double ridge = 1e-9) {
    return design_objective_at(p, mix_with_uniform(lambda, eta), tau, ridge);
}

namespace detail {

inline std::vector<AllocationGroup> design_groups(const DesignProblem& p) {
    std::vector<AllocationGroup> groups;
    groups.reserve(p.targets.size());
    for (std::size_t k = 0; k < p.targets.size(); ++k) {
        const double denom = p.threshold + p.scale * p.offsets[static_cast<Eigen::Index>(k)];
        groups.push_back({{k, 1.0 / (denom * denom)}});
    }
    return groups;
}

inline Design finish_design(const DesignProblem& p, const SimplexWeights& raw, const SimplexWeights& mixed,
                            double weighted_value, const DesignOptions& opt) {
    Design d;
    d.lambda_raw = raw;
    d.lambda = mixed;
    d.tau_star = p.log_term * weighted_value;
    if (!std::isfinite(d.tau_star) || d.tau_star > static_cast<double>(opt.tau_cap))
        throw DesignBudgetError("design budget exceeds the configured cap");
    d.tau = next_power_of_two(std::max(static_cast<double>(p.tau_min), d.tau_star));
    d.achieved_objective = design_objective_at(p, mixed, static_cast<double>(d.tau), opt.allocation.ridge);
    while (d.achieved_objective > p.threshold) {
        // Only reachable through rounding in the last bits.
        if (d.tau > opt.tau_cap) throw DesignBudgetError("design budget exceeds the configured cap");
        d.tau *= 2;
        d.achieved_objective = design_objective_at(p, mixed, static_cast<double>(d.tau), opt.allocation.ridge);
    }
    if (d.tau > opt.tau_cap) throw DesignBudgetError("design budget exceeds the configured cap");
    return d;
}

}  // namespace detail

/// Minimal power-of-two budget and its allocation. The returned design always
/// satisfies design_objective <= threshold (checked, not assumed).
inline Design solve_design(const DesignProblem& p, const DesignOptions& opt = {}) {
    p.validate();
    const auto groups = detail::design_groups(p);
    const AllocationResult r = solve_allocation(p.arms_X, p.targets, groups, opt.allocation);
    return detail::finish_design(p, r.lambda, mix_with_uniform(r.lambda, opt.allocation.eta), r.value, opt);
}

/// Minimal power-of-two budget for a fixed sampling distribution.
inline Design budget_for_allocation(const DesignProblem& p, const SimplexWeights& lambda_tilde, const DesignOptions& opt = {}) {
    p.validate();
    const AllocationEvaluator ev(p.arms_X, p.targets, 0.0, opt.allocation.ridge);
    const Vector q = ev.quad(lambda_tilde);
    const double v = detail::group_objective(detail::design_groups(p), q);
    return detail::finish_design(p, lambda_tilde, lambda_tilde, v, opt);
}

/// Targets = Z, offsets c(z) + eps_l.
inline DesignProblem xy_safe_problem(const ArmMatrix& X, const ArmMatrix& Z, const Vector& c_of_z, double eps_l, double scale,
                                     double log_term, std::int64_t tau_min, double threshold) {
    if (c_of_z.size() != Z.cols()) throw std::invalid_argument("xy_safe_problem: |c| != |Z|");
    if ((c_of_z.array() < 0.0).any()) throw std::invalid_argument("xy_safe_problem: c values must be non-negative");
    DesignProblem p;
    p.arms_X = X;
    p.targets = TargetSet::columns(Z);
    p.offsets = (c_of_z.array() + eps_l).matrix();
    p.scale = scale;
    p.log_term = log_term;
    p.tau_min = tau_min;
    p.threshold = threshold;
    return p;
}

/// Targets z - y_hat, offsets safe_neg(z) + opt_gap_pos(z) + eps_l.
inline DesignProblem xy_diff_problem(const ArmMatrix& X, const ArmMatrix& Z, const Vector& y_hat, const Vector& safe_neg,
                                     const Vector& opt_gap_pos, double eps_l, double scale, double log_term,
                                     std::int64_t tau_min, double threshold) {
    if (safe_neg.size() != Z.cols() || opt_gap_pos.size() != Z.cols())
        throw std::invalid_argument("xy_diff_problem: offset lengths must equal |Z|");
    if (y_hat.size() != Z.rows()) throw std::invalid_argument("xy_diff_problem: y_hat has wrong dimension");
    if ((safe_neg.array() < 0.0).any() || (opt_gap_pos.array() < 0.0).any())
        throw std::invalid_argument("xy_diff_problem: offsets must be non-negative");
    DesignProblem p;
    p.arms_X = X;
    p.targets.U.resize(Z.rows(), Z.cols() + 1);
    p.targets.U.leftCols(Z.cols()) = Z;
    p.targets.U.col(Z.cols()) = y_hat;
    for (Eigen::Index j = 0; j < Z.cols(); ++j) p.targets.refs.emplace_back(static_cast<int>(j), static_cast<int>(Z.cols()));
    p.offsets = ((safe_neg + opt_gap_pos).array() + eps_l).matrix();
    p.scale = scale;
    p.log_term = log_term;
    p.tau_min = tau_min;
    p.threshold = threshold;
    return p;
}

/// Targets {z - y : z in Z, y in Y, z != y} with zero offsets; Y is given by
/// column indices into Z.
inline DesignProblem xy_pairs_problem(const ArmMatrix& X, const ArmMatrix& Z, const std::vector<std::size_t>& y_idx,
                                      double log_term, std::int64_t tau_min, double threshold) {
    DesignProblem p;
    p.arms_X = X;
    p.targets.U = Z;
    for (Eigen::Index z = 0; z < Z.cols(); ++z)
        for (std::size_t y : y_idx) {
            const auto yi = static_cast<Eigen::Index>(y);
            if (yi == z || (Z.col(z) - Z.col(yi)).squaredNorm() == 0.0) continue;
            p.targets.refs.emplace_back(static_cast<int>(z), static_cast<int>(yi));
        }
    if (p.targets.refs.empty()) p.targets.refs.emplace_back(0, 0);  // a single zero target
    p.offsets = Vector::Zero(static_cast<Eigen::Index>(p.targets.size()));
    p.log_term = log_term;
    p.tau_min = tau_min;
    p.threshold = threshold;
    return p;
}

}  // namespace safebai
