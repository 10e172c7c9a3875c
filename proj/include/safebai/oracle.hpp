#pragma once

// Transportation lower bound for the single-constraint problem.
//
// For an allocation lambda the cheapest alternative instance (one where z* is
// no longer the best safe arm) costs
//     min{ min_{z != z*} p(z^T mu - g)^2 / ||z||^2 + p((z* - z)^T theta)^2 / ||z - z*||^2,
//          (z*^T mu - g)^2 / ||z*||^2 }
// in the A(lambda) geometry, with p the positive part. The theorem form of the
// bound replaces the per-arm sum by the larger of the two terms.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include "design.hpp"
#include "instances.hpp"

namespace safebai {

struct AltProjection {
    double value = 0.0;
    std::optional<std::size_t> witness_arm;  // none when flipping z* unsafe is cheapest
};

namespace detail {

inline void require_single_constraint(const ProblemInstance& inst, const char* who) {
    inst.validate();
    if (inst.m() != 1) throw std::invalid_argument(std::string(who) + ": only m = 1 is supported");
}

inline bool same_arm(const Vector& a, const Vector& b) { return (a - b).lpNorm<Eigen::Infinity>() == 0.0; }

/// g^2 / q with the conventions 0 / 0 = 0 and g^2 / 0 = inf for g != 0.
inline double cost_term(double g, double q) {
    if (g == 0.0) return 0.0;
    if (q <= 0.0) return std::numeric_limits<double>::infinity();
    return g * g / q;
}

}  // namespace detail

/// Closed-form projection onto the alternative set. A(lambda) is built from
/// lambda exactly as given (no mixing, no ridge), so lambda must span the arms
/// involved.
inline AltProjection alt_projection(const ProblemInstance& inst, const SimplexWeights& lambda) {
    detail::require_single_constraint(inst, "alt_projection");
    const TrueGaps g = true_gaps(inst);
    const auto star = static_cast<Eigen::Index>(g.best_safe_arm);
    const Vector zs = inst.Z.col(star);
    const InfoMatrix a = info_matrix(lambda, inst.X, 0.0);

    AltProjection out;
    out.value = detail::cost_term(g.delta_safe(0, star), mahalanobis_sq(zs, a));
    for (Eigen::Index j = 0; j < inst.Z.cols(); ++j) {
        if (j == star) continue;
        const Vector z = inst.Z.col(j);
        if (detail::same_arm(z, zs)) continue;
        const double safety = detail::cost_term(positive_part(-g.delta_safe(0, j)), mahalanobis_sq(z, a));
        const double value = detail::cost_term(positive_part(g.delta[j]), mahalanobis_sq(Vector(z - zs), a));
        if (safety + value < out.value) {
            out.value = safety + value;
            out.witness_arm = static_cast<std::size_t>(j);
        }
    }
    return out;
}

/// ||theta* - theta||^2_A + ||mu* - mu||^2_A for a candidate alternative.
inline double alternative_cost(const ProblemInstance& inst, const SimplexWeights& lambda, const Vector& theta,
                               const Vector& mu) {
    const Matrix a = info_matrix(lambda, inst.X, 0.0).matrix();
    const Vector dt = inst.theta_star - theta;
    const Vector dm = inst.mu_star.col(0) - mu;
    return dt.dot(a * dt) + dm.dot(a * dm);
}

/// True when (theta, mu) lies in the closure of the alternative set.
inline bool in_alternative_closure(const ProblemInstance& inst, const Vector& theta, const Vector& mu, double tol = 1e-12) {
    detail::require_single_constraint(inst, "in_alternative_closure");
    const std::size_t star = true_gaps(inst).best_safe_arm;
    const Vector zs = inst.Z.col(static_cast<Eigen::Index>(star));
    if (zs.dot(mu) >= inst.gamma - tol) return true;
    for (Eigen::Index j = 0; j < inst.Z.cols(); ++j) {
        if (static_cast<std::size_t>(j) == star) continue;
        const Vector z = inst.Z.col(j);
        if (z.dot(mu) <= inst.gamma + tol && theta.dot(zs - z) <= tol) return true;
    }
    return false;
}

struct OracleOptions {
    AllocationOptions allocation{0.0, 1e-12, 400, 1e-6, {20.0, 200.0, 2000.0, 20000.0}};
    int restarts = 5;
    int grid_points = 10000;
    std::uint64_t seed = 7;
};

struct LowerBound {
    double log_factor = 0.0;        // log(1 / (2.4 delta))
    double complexity = 0.0;        // min over lambda of the theorem's max expression
    double bound = 0.0;             // log_factor * complexity
    SimplexWeights lambda;          // minimizing allocation
    double fw_complexity = 0.0;     // best Frank-Wolfe value over the restarts
    std::optional<double> grid_complexity;  // two-arm grid value
    bool degenerate = false;        // z* sits on the safety boundary
};

namespace detail {

struct LowerBoundTargets {
    TargetSet targets;
    std::vector<AllocationGroup> groups;
};

/// Targets U = [Z, z*]: z itself for the safety term and z - z* for the
/// value term. Each z != z* contributes one min-group.
inline LowerBoundTargets lower_bound_targets(const ProblemInstance& inst) {
    const TrueGaps g = true_gaps(inst);
    const auto n = inst.Z.cols();
    const auto star = static_cast<Eigen::Index>(g.best_safe_arm);
    LowerBoundTargets out;
    out.targets.U = inst.Z;
    const auto inv_sq = [](double gap) {
        return gap > 0.0 ? 1.0 / (gap * gap) : std::numeric_limits<double>::infinity();
    };
    for (Eigen::Index j = 0; j < n; ++j) {
        out.targets.refs.emplace_back(static_cast<int>(j), -1);
        out.targets.refs.emplace_back(static_cast<int>(j), static_cast<int>(star));
    }
    const double star_gap = g.delta_safe(0, star);
    out.groups.push_back({{2 * static_cast<std::size_t>(star), inv_sq(star_gap)}});
    for (Eigen::Index j = 0; j < n; ++j) {
        if (j == star || same_arm(inst.Z.col(j), inst.Z.col(star))) continue;
        const auto k = 2 * static_cast<std::size_t>(j);
        out.groups.push_back({{k, inv_sq(positive_part(-g.delta_safe(0, j)))}, {k + 1, inv_sq(positive_part(g.delta[j]))}});
    }
    return out;
}

}  // namespace detail

/// Theorem-form objective max{ max_z min{||z||^2/p(-Ds)^2, ||z - z*||^2/p(D)^2}, ||z*||^2/Ds(z*)^2 }
/// at one allocation.
inline double lower_bound_objective(const ProblemInstance& inst, const SimplexWeights& lambda, double ridge = 0.0) {
    detail::require_single_constraint(inst, "lower_bound_objective");
    auto lt = detail::lower_bound_targets(inst);
    for (auto& grp : lt.groups) {
        std::erase_if(grp, [](const auto& e) { return !std::isfinite(e.second); });
        if (grp.empty()) return std::numeric_limits<double>::infinity();
    }
    const AllocationEvaluator ev(inst.X, lt.targets, 0.0, ridge);
    return detail::group_objective(lt.groups, ev.quad(lambda));
}

/// log(1/(2.4 delta)) times the minimum over the simplex of the theorem-form
/// objective. Frank-Wolfe from `restarts` starting points (uniform first, then
/// random); two-arm problems are also scanned on a grid and the smaller value
/// is kept. Infinite when z* has zero safety slack.
inline LowerBound oracle_lower_bound(const ProblemInstance& inst, double delta, const OracleOptions& opt = {}) {
    detail::require_single_constraint(inst, "oracle_lower_bound");
    if (!(delta > 0.0 && delta < 1.0 / 2.4)) throw std::invalid_argument("oracle_lower_bound: delta must lie in (0, 1/2.4)");
    LowerBound out;
    out.log_factor = std::log(1.0 / (2.4 * delta));
    const auto n = static_cast<std::size_t>(inst.X.cols());
    out.lambda = SimplexWeights::uniform(n);

    const TrueGaps g = true_gaps(inst);
    if (!(g.delta_safe(0, static_cast<Eigen::Index>(g.best_safe_arm)) > 0.0)) {
        out.degenerate = true;
        out.complexity = out.fw_complexity = out.bound = std::numeric_limits<double>::infinity();
        return out;
    }

    const auto lt = detail::lower_bound_targets(inst);
    std::mt19937_64 rng(opt.seed);
    std::exponential_distribution<double> expo(1.0);
    out.fw_complexity = std::numeric_limits<double>::infinity();
    for (int r = 0; r < std::max(1, opt.restarts); ++r) {
        SimplexWeights start = SimplexWeights::uniform(n);
        if (r > 0) {
            Vector w(static_cast<Eigen::Index>(n));
            for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = expo(rng);
            start = SimplexWeights::normalized(w);
        }
        const AllocationResult res = solve_allocation(inst.X, lt.targets, lt.groups, opt.allocation, start);
        const double exact = lower_bound_objective(inst, res.lambda, opt.allocation.ridge);
        if (exact < out.fw_complexity) {
            out.fw_complexity = exact;
            out.lambda = res.lambda;
        }
    }
    out.complexity = out.fw_complexity;

    if (n == 2 && opt.grid_points > 0) {
        double best = std::numeric_limits<double>::infinity();
        Vector w(2);
        for (int i = 0; i < opt.grid_points; ++i) {
            w[0] = (i + 0.5) / opt.grid_points;
            w[1] = 1.0 - w[0];
            const SimplexWeights lam(w);
            const double v = lower_bound_objective(inst, lam, opt.allocation.ridge);
            if (v < best) {
                best = v;
                if (v < out.complexity) {
                    out.complexity = v;
                    out.lambda = lam;
                }
            }
        }
        out.grid_complexity = best;
    }
    out.bound = out.log_factor * out.complexity;
    return out;
}

/// Transportation bound computed from the projection directly:
/// log(1/(2.4 delta)) * min_lambda 2 / alt_projection(lambda). Maximizes the
/// (concave) projection value by Frank-Wolfe on the active branch.
inline LowerBound projection_lower_bound(const ProblemInstance& inst, double delta, int iters = 3000) {
    detail::require_single_constraint(inst, "projection_lower_bound");
    if (!(delta > 0.0 && delta < 1.0 / 2.4)) throw std::invalid_argument("projection_lower_bound: delta must lie in (0, 1/2.4)");
    LowerBound out;
    out.log_factor = std::log(1.0 / (2.4 * delta));
    const auto n = static_cast<std::size_t>(inst.X.cols());
    const TrueGaps g = true_gaps(inst);
    const auto star = static_cast<Eigen::Index>(g.best_safe_arm);
    const Vector zs = inst.Z.col(star);
    out.lambda = SimplexWeights::uniform(n);
    if (!(g.delta_safe(0, star) > 0.0)) {
        out.degenerate = true;
        out.complexity = out.fw_complexity = out.bound = std::numeric_limits<double>::infinity();
        return out;
    }

    // Gradient of g^2 / (t^T A^-1 t) in lambda_x is g^2 (x^T A^-1 t)^2 / q^2.
    const auto add_grad = [&](const InfoMatrix& a, const Vector& t, double gap, Vector& grad) {
        if (gap == 0.0) return;
        const Vector u = a.solve(t);
        const double q = t.dot(u);
        const Vector xu = inst.X.transpose() * u;
        grad += (gap * gap / (q * q)) * xu.array().square().matrix();
    };
    Vector lam = out.lambda.weights();
    double best = alt_projection(inst, out.lambda).value;
    for (int k = 0; k < iters; ++k) {
        const SimplexWeights lw(lam);
        const AltProjection p = alt_projection(inst, lw);
        if (p.value > best) {
            best = p.value;
            out.lambda = lw;
        }
        const InfoMatrix a = info_matrix(lw, inst.X, 0.0);
        Vector grad = Vector::Zero(static_cast<Eigen::Index>(n));
        if (!p.witness_arm) {
            add_grad(a, zs, g.delta_safe(0, star), grad);
        } else {
            const auto j = static_cast<Eigen::Index>(*p.witness_arm);
            add_grad(a, inst.Z.col(j), positive_part(-g.delta_safe(0, j)), grad);
            add_grad(a, Vector(inst.Z.col(j) - zs), positive_part(g.delta[j]), grad);
        }
        Eigen::Index s = 0;
        grad.maxCoeff(&s);
        const double step = 2.0 / (k + 3.0);
        lam *= 1.0 - step;
        lam[s] += step;
    }
    out.fw_complexity = out.complexity = 2.0 / best;
    out.bound = out.log_factor * out.complexity;
    return out;
}

}  // namespace safebai
