#pragma once

// Adaptive algorithms: BESIDE, its RAGE-style gap-refinement subroutine, the
// elimination variants, the two-stage baseline and single-design ablations.
//
// Everything is in maximization form: larger theta^T z is better, and the
// returned arm is an index into instance.Z.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "constants.hpp"
#include "design.hpp"
#include "environment.hpp"
#include "estimators.hpp"
#include "instances.hpp"

namespace safebai {

using ArmIndices = std::vector<std::size_t>;

struct AlgorithmOptions {
    DesignOptions design;
    RipsConfig rips;
    bool variance_from_noise = true;  // Catoni variance scale 1 + sigma^2
    bool record_tables = false;
    // The full run makes three families of estimator calls whose failure
    // probabilities sum to at most twice the confidence they are given; the
    // caller's delta is scaled by this factor before use.
    double delta_scale = 0.5;
};

struct GapTable {
    int round = 0;
    double eps_l = 0.0;
    Vector delta_hat;
    Matrix delta_safe_hat;
    std::vector<bool> safe_set_flags;
    Design design_used;
};

struct RunRecord {
    std::string algorithm;
    std::size_t returned_arm = 0;
    std::int64_t total_pulls = 0;
    std::int64_t pulls_phase_safety = 0;
    std::int64_t pulls_phase_optimality = 0;
    double eps = 0.0;
    double delta = 0.0;
    bool is_eps_good = false;
    bool is_eps_safe = false;
    std::uint64_t seed = 0;
    double wall_ms = 0.0;
    bool failed = false;
    std::string error;
};

struct RunDetail {
    RunRecord record;
    std::vector<GapTable> tables;
    std::vector<PhaseBudget> budgets;
    std::vector<std::size_t> y_end;
    double delta_spent = 0.0;
};

struct RageResult {
    Vector delta_hat;                  // aligned with the z indices passed in
    std::vector<std::int64_t> taus;
};

namespace detail {

inline ArmMatrix columns_of(const ArmMatrix& m, const ArmIndices& idx) { return select_columns(m, idx); }

inline RipsConfig rips_config_for(const ProblemInstance& inst, const AlgorithmOptions& opt) {
    RipsConfig cfg = opt.rips;
    if (opt.variance_from_noise) cfg.variance_scale = 1.0 + inst.noise_sigma * inst.noise_sigma;
    return cfg;
}

/// Distinct nonzero directions among the columns; returns the positions kept.
inline std::vector<Eigen::Index> nonzero_distinct(const Matrix& vs) {
    std::vector<Eigen::Index> keep;
    for (Eigen::Index j = 0; j < vs.cols(); ++j) {
        if (vs.col(j).squaredNorm() == 0.0) continue;
        bool dup = false;
        for (Eigen::Index k : keep)
            if (vs.col(k) == vs.col(j) || vs.col(k) == -vs.col(j)) {
                dup = true;
                break;
            }
        if (!dup) keep.push_back(j);
    }
    return keep;
}

/// Difference directions z - z' over unordered pairs, zero and repeated
/// directions removed. Used by the RIPS call of the refinement rounds.
inline Matrix pair_differences(const ArmMatrix& Z) {
    std::vector<Vector> out;
    for (Eigen::Index i = 0; i < Z.cols(); ++i)
        for (Eigen::Index j = i + 1; j < Z.cols(); ++j) {
            Vector w = Z.col(i) - Z.col(j);
            if (w.squaredNorm() == 0.0) continue;
            out.push_back(std::move(w));
        }
    Matrix m(Z.rows(), static_cast<Eigen::Index>(out.size()));
    for (std::size_t k = 0; k < out.size(); ++k) m.col(static_cast<Eigen::Index>(k)) = out[k];
    if (Z.cols() > 40) return m;  // duplicates only matter for lattice-like arm sets; skip the quadratic scan
    const auto keep = nonzero_distinct(m);
    Matrix d(Z.rows(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k) d.col(static_cast<Eigen::Index>(k)) = m.col(keep[k]);
    return d;
}

inline std::int64_t ceil_tau(double v) { return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(v - 1e-12))); }

inline Design make_design(const DesignProblem& p, const std::optional<SimplexWeights>& fixed, const AlgorithmOptions& opt) {
    return fixed ? budget_for_allocation(p, *fixed, opt.design) : solve_design(p, opt.design);
}

inline std::size_t argmin_lowest(const Vector& v) {
    std::size_t best = 0;
    for (Eigen::Index j = 1; j < v.size(); ++j)
        if (v[j] < v[static_cast<Eigen::Index>(best)]) best = static_cast<std::size_t>(j);
    return best;
}

/// Per-constraint safety estimates gamma - z^T mu_hat (m x |Z|) from one batch.
/// Zero arms are known exactly and skipped by the estimator.
inline Matrix estimate_safety(const ProblemInstance& inst, const Batch& batch, const SimplexWeights& lambda,
                              const ArmMatrix& Z, double delta_per_constraint, const RipsConfig& cfg) {
    const auto m = inst.m();
    Matrix out = Matrix::Constant(m, Z.cols(), inst.gamma);
    const auto keep = nonzero_distinct(Z);
    if (keep.empty()) return out;
    Matrix dirs(Z.rows(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k) dirs.col(static_cast<Eigen::Index>(k)) = Z.col(keep[k]);
    for (Eigen::Index i = 0; i < m; ++i) {
        const RipsEstimate est = rips_estimate(batch.safety[static_cast<std::size_t>(i)], lambda, inst.X, dirs,
                                               delta_per_constraint, cfg);
        for (Eigen::Index j = 0; j < Z.cols(); ++j)
            if (Z.col(j).squaredNorm() > 0.0) out(i, j) = inst.gamma - Z.col(j).dot(est.theta_hat);
    }
    return out;
}

}  // namespace detail

struct RageOptions {
    std::optional<SimplexWeights> fixed_lambda;  // sample from this distribution instead of solving designs
    std::optional<std::size_t> y0;              // position in Y of the initial reference arm
    int round_tag = 0;
};

/// Gap refinement over the active set `z_idx` with candidate optimal set
/// `y_idx` (a subset of z_idx; both index instance.Z). `safe_neg` holds the
/// estimated constraint violations aligned with z_idx.
inline RageResult rage_eps(Environment& env, const ArmIndices& z_idx, const ArmIndices& y_idx, double eps, double delta,
                           const Vector& safe_neg, const ConstantsLedger& k, const AlgorithmOptions& opt,
                           ConfidenceLedger& conf, const RageOptions& ro = {}) {
    const ProblemInstance& inst = env.instance();
    const std::size_t nz = z_idx.size();
    if (nz == 0) throw std::invalid_argument("rage_eps: empty active set");
    if (y_idx.empty()) throw std::invalid_argument("rage_eps: empty optimal set");
    if (static_cast<std::size_t>(safe_neg.size()) != nz) throw std::invalid_argument("rage_eps: |safe_neg| != |Z|");
    if (!(eps > 0.0) || !(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("rage_eps: need eps > 0, delta in (0,1)");
    std::vector<std::size_t> y_pos;
    for (std::size_t y : y_idx) {
        const auto it = std::find(z_idx.begin(), z_idx.end(), y);
        if (it == z_idx.end()) throw std::invalid_argument("rage_eps: Y must be a subset of Z");
        y_pos.push_back(static_cast<std::size_t>(it - z_idx.begin()));
    }

    RageResult res;
    res.delta_hat = Vector::Zero(static_cast<Eigen::Index>(nz));
    if (nz == 1) return res;

    const ArmMatrix Z = detail::columns_of(inst.Z, z_idx);
    const Matrix W = detail::pair_differences(Z);
    if (W.cols() == 0) return res;
    const RipsConfig rcfg = detail::rips_config_for(inst, opt);

    std::size_t y_hat = y_pos.at(ro.y0.value_or(0));
    const int rounds = std::max(1, static_cast<int>(std::ceil(std::log2(2.0 / (k.c_f * eps)) - 1e-12)));
    const double n = static_cast<double>(nz);
    for (int l = 1; l <= rounds; ++l) {
        const double eps_l = (2.0 / k.c_f) * std::ldexp(1.0, -l);
        const double lg = std::log(4.0 * n * n * l * l / delta);
        const Vector opt_pos = res.delta_hat.cwiseMax(0.0);
        const DesignProblem p = xy_diff_problem(inst.X, Z, Z.col(static_cast<Eigen::Index>(y_hat)), safe_neg, opt_pos, eps_l,
                                                k.c_a, lg, detail::ceil_tau(4.0 * lg), k.c_c * eps_l);
        const Design des = detail::make_design(p, ro.fixed_lambda, opt);
        res.taus.push_back(des.tau);
        const Batch b = env.sample(des.lambda, des.tau, Phase::Optimality, ro.round_tag, true, false);
        const RipsEstimate est =
            rips_estimate(b.rewards, des.lambda, inst.X, W, conf.charge(delta / (2.0 * l * l)), rcfg);

        const InfoMatrix A = info_matrix(des.lambda, inst.X, opt.design.allocation.ridge);
        const double tau = static_cast<double>(des.tau);
        const Vector values = Z.transpose() * est.theta_hat;
        double best_score = -std::numeric_limits<double>::infinity();
        std::size_t next = y_pos.front();
        for (std::size_t yp : y_pos) {
            const Vector diff = Z.col(static_cast<Eigen::Index>(yp)) - Z.col(static_cast<Eigen::Index>(y_hat));
            const double score = values[static_cast<Eigen::Index>(yp)] - 8.0 * std::sqrt(mahalanobis_sq(diff, A) * lg / tau);
            if (score > best_score) {
                best_score = score;
                next = yp;
            }
        }
        y_hat = next;
        for (std::size_t j = 0; j < nz; ++j) {
            const auto ji = static_cast<Eigen::Index>(j);
            const Vector diff = Z.col(ji) - Z.col(static_cast<Eigen::Index>(y_hat));
            res.delta_hat[ji] = values[static_cast<Eigen::Index>(y_hat)] - values[ji] + std::sqrt(mahalanobis_sq(diff, A) * lg / tau);
        }
    }
    return res;
}

struct ElimResult {
    ArmIndices active;
    ArmIndices safe;
    std::vector<double> last_gap;  // aligned with `active`
};

/// Elimination over (Z, Y): each round halves the tolerance and drops arms
/// whose estimated gap to the best of Y exceeds it.
inline ElimResult rage_elim(Environment& env, const ArmIndices& z_idx, const ArmIndices& y_idx, double eps, double delta,
                            const AlgorithmOptions& opt, ConfidenceLedger& conf, int round_tag = 0) {
    if (y_idx.empty()) throw std::invalid_argument("rage_elim: empty optimal set");
    if (!(eps > 0.0) || !(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("rage_elim: need eps > 0, delta in (0,1)");
    const ProblemInstance& inst = env.instance();
    const RipsConfig rcfg = detail::rips_config_for(inst, opt);
    ArmIndices zc = z_idx;
    ArmIndices yc = y_idx;
    std::vector<double> gaps(zc.size(), 0.0);
    const int rounds = std::max(1, static_cast<int>(std::ceil(std::log2(1.0 / eps) - 1e-12)));
    for (int l = 1; l <= rounds; ++l) {
        ArmIndices all = zc;
        for (std::size_t y : yc)
            if (std::find(all.begin(), all.end(), y) == all.end()) all.push_back(y);
        if (all.size() <= 1) break;
        const double eps_l = std::ldexp(1.0, -l);
        const double delta_l = delta / (2.0 * l * l);
        const ArmMatrix V = detail::columns_of(inst.Z, all);
        std::vector<std::size_t> ypos;
        for (std::size_t y : yc) ypos.push_back(static_cast<std::size_t>(std::find(all.begin(), all.end(), y) - all.begin()));

        // Unordered {z, y} pairs with y in Y; identical vectors carry no information.
        TargetSet ts;
        ts.U = V;
        std::vector<bool> in_y(all.size(), false);
        for (std::size_t p : ypos) in_y[p] = true;
        for (std::size_t a = 0; a < all.size(); ++a)
            for (std::size_t b = a + 1; b < all.size(); ++b) {
                if (!in_y[a] && !in_y[b]) continue;
                if ((V.col(static_cast<Eigen::Index>(a)) - V.col(static_cast<Eigen::Index>(b))).squaredNorm() == 0.0) continue;
                ts.refs.emplace_back(static_cast<int>(a), static_cast<int>(b));
            }
        if (ts.refs.empty()) break;
        const double nw = static_cast<double>(ts.size());
        DesignProblem p;
        p.arms_X = inst.X;
        p.targets = ts;
        p.offsets = Vector::Zero(static_cast<Eigen::Index>(ts.size()));
        p.log_term = 8.0 * std::log(2.0 * nw / delta_l);
        p.threshold = eps_l / 2.0;
        p.tau_min = detail::ceil_tau(4.0 * std::log(2.0 * nw / delta_l));
        const Design des = solve_design(p, opt.design);
        const Batch b = env.sample(des.lambda, des.tau, Phase::Optimality, round_tag, true, false);
        const RipsEstimate est = rips_estimate(b.rewards, des.lambda, inst.X, ts.dense(), conf.charge(delta_l), rcfg);

        const Vector values = V.transpose() * est.theta_hat;
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t yp : ypos) best = std::max(best, values[static_cast<Eigen::Index>(yp)]);
        auto gap_of = [&](std::size_t arm) {
            const auto pos = static_cast<Eigen::Index>(std::find(all.begin(), all.end(), arm) - all.begin());
            return best - values[pos];
        };
        ArmIndices zn;
        std::vector<double> gn;
        for (std::size_t z : zc) {
            const double g = gap_of(z);
            if (g <= eps_l) {
                zn.push_back(z);
                gn.push_back(g);
            }
        }
        ArmIndices yn;
        for (std::size_t y : yc)
            if (gap_of(y) <= eps_l) yn.push_back(y);
        zc = std::move(zn);
        gaps = std::move(gn);
        yc = std::move(yn);
    }
    return {zc, yc, gaps};
}

namespace detail {

inline void finish_record(RunDetail& out, const Environment& env, const std::string& name, std::size_t arm, double eps,
                          double delta, std::chrono::steady_clock::time_point t0, const ConfidenceLedger& conf) {
    RunRecord& r = out.record;
    r.algorithm = name;
    r.returned_arm = arm;
    r.total_pulls = env.total_pulls();
    r.pulls_phase_safety = env.safety_pulls();
    r.pulls_phase_optimality = env.optimality_pulls();
    r.eps = eps;
    r.delta = delta;
    r.is_eps_good = is_eps_good(env.instance(), arm, eps);
    r.is_eps_safe = is_eps_safe(env.instance(), arm, eps);
    r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    out.budgets = env.budgets();
    out.delta_spent = conf.spent();
}

inline void check_run_args(const ProblemInstance& inst, double eps, double delta) {
    if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("eps must lie in (0, 1)");
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must lie in (0, 1)");
    (void)true_gaps(inst);  // rejects instances without a safe arm
}

/// c(z) = min_j |ds_j| + max_j p(-ds_j) + p(d).
inline Vector tolerance_offsets(const Matrix& delta_safe, const Vector& delta_hat) {
    Vector c(delta_hat.size());
    for (Eigen::Index z = 0; z < c.size(); ++z) {
        const auto col = delta_safe.col(z);
        c[z] = col.cwiseAbs().minCoeff() + positive_part(-col.minCoeff()) + positive_part(delta_hat[z]);
    }
    return c;
}

inline Vector max_violation(const Matrix& delta_safe) {
    Vector v(delta_safe.cols());
    for (Eigen::Index z = 0; z < v.size(); ++z) v[z] = positive_part(-delta_safe.col(z).minCoeff());
    return v;
}

}  // namespace detail

struct BesideOptions {
    std::optional<SimplexWeights> fixed_lambda;  // single-design ablations
    std::string name = "beside";
};

/// BESIDE with generic constants.
inline RunDetail beside(Environment& env, double eps, double delta, const ConstantsLedger& k, const AlgorithmOptions& opt = {},
                        const BesideOptions& bo = {}) {
    const auto t0 = std::chrono::steady_clock::now();
    const ProblemInstance& inst = env.instance();
    detail::check_run_args(inst, eps, delta);
    k.validate_ranges();
    ConfidenceLedger conf(delta);
    const double dl = delta * opt.delta_scale;
    const RipsConfig rcfg = detail::rips_config_for(inst, opt);

    const auto nz = inst.Z.cols();
    const auto m = inst.m();
    const ArmIndices all = iota_indices(static_cast<std::size_t>(nz));
    Matrix ds = Matrix::Zero(m, nz);
    Vector dh = Vector::Zero(nz);
    std::vector<bool> in_y(static_cast<std::size_t>(nz), false);
    RunDetail out;

    const double cmin = std::min(k.c_3, k.c_4);
    const double eps0 = 2.0 / cmin;
    const int rounds = std::max(1, static_cast<int>(std::ceil(std::log2(eps0 / eps) - 1e-12)));
    for (int l = 1; l <= rounds; ++l) {
        const double eps_l = eps0 * std::ldexp(1.0, -l);
        const double ls = std::log(4.0 * static_cast<double>(m) * static_cast<double>(nz) * l * l / dl);
        const Vector c = detail::tolerance_offsets(ds, dh);

        const DesignProblem p1 = xy_safe_problem(inst.X, inst.Z, c, eps_l, k.c_d, ls, detail::ceil_tau(4.0 * ls), k.c_e * eps_l);
        const Design des = detail::make_design(p1, bo.fixed_lambda, opt);
        const Batch b = env.sample(des.lambda, des.tau, Phase::Safety, l, false, true);
        const double dconf = dl / (2.0 * static_cast<double>(m) * l * l);
        for (Eigen::Index i = 0; i < m; ++i) conf.charge(dconf);
        Matrix ds_new = detail::estimate_safety(inst, b, des.lambda, inst.Z, dconf, rcfg);
        const InfoMatrix A = info_matrix(des.lambda, inst.X, opt.design.allocation.ridge);
        const Vector zn = mahalanobis_sq_cols(inst.Z, A).cwiseSqrt();
        const double scale = std::sqrt(ls / static_cast<double>(des.tau));
        for (Eigen::Index j = 0; j < nz; ++j) ds_new.col(j).array() += zn[j] * scale;

        for (Eigen::Index j = 0; j < nz; ++j) {
            const double need = k.kappa_safe * k.c_d * c[j] + k.kappa_safe * (k.c_d + k.c_e) * eps_l;
            if (ds_new.col(j).minCoeff() >= need) in_y[static_cast<std::size_t>(j)] = true;
        }
        ds = ds_new;

        ArmIndices y_set;
        for (std::size_t j = 0; j < in_y.size(); ++j)
            if (in_y[j]) y_set.push_back(j);
        if (!y_set.empty()) {
            std::size_t y0 = 0;
            for (std::size_t q = 1; q < y_set.size(); ++q)
                if (ds.col(static_cast<Eigen::Index>(y_set[q])).minCoeff() > ds.col(static_cast<Eigen::Index>(y_set[y0])).minCoeff())
                    y0 = q;
            RageOptions ro;
            ro.fixed_lambda = bo.fixed_lambda;
            ro.y0 = y0;
            ro.round_tag = l;
            dh = rage_eps(env, all, y_set, eps_l, dl / (4.0 * l * l), detail::max_violation(ds), k, opt, conf, ro).delta_hat;
        }
        if (opt.record_tables) out.tables.push_back({l, eps_l, dh, ds, in_y, des});
    }

    // Arms whose safety is certified up to the final tolerance.
    const Vector c_end = detail::tolerance_offsets(ds, dh);
    ArmIndices y_end;
    for (Eigen::Index j = 0; j < nz; ++j) {
        const double need = k.kappa_safe * k.c_d * c_end[j] + k.kappa_safe * (k.c_d + k.c_e) * eps - k.c_g * eps;
        if (ds.col(j).minCoeff() >= need) y_end.push_back(static_cast<std::size_t>(j));
    }
    if (y_end.empty())
        for (std::size_t j = 0; j < in_y.size(); ++j)
            if (in_y[j]) y_end.push_back(j);
    if (y_end.empty()) {
        std::size_t best = 0;
        for (Eigen::Index j = 1; j < nz; ++j)
            if (ds.col(j).minCoeff() > ds.col(static_cast<Eigen::Index>(best)).minCoeff()) best = static_cast<std::size_t>(j);
        y_end.push_back(best);
    }
    out.y_end = y_end;

    const Vector viol = detail::max_violation(ds);
    Vector viol_end(static_cast<Eigen::Index>(y_end.size()));
    for (std::size_t q = 0; q < y_end.size(); ++q) viol_end[static_cast<Eigen::Index>(q)] = viol[static_cast<Eigen::Index>(y_end[q])];
    RageOptions ro;
    ro.fixed_lambda = bo.fixed_lambda;
    ro.round_tag = rounds + 1;
    std::size_t y0 = 0;
    for (std::size_t q = 1; q < y_end.size(); ++q)
        if (ds.col(static_cast<Eigen::Index>(y_end[q])).minCoeff() > ds.col(static_cast<Eigen::Index>(y_end[y0])).minCoeff()) y0 = q;
    ro.y0 = y0;
    const RageResult fin = rage_eps(env, y_end, y_end, eps, dl, viol_end, k, opt, conf, ro);
    const std::size_t arm = y_end[detail::argmin_lowest(fin.delta_hat)];
    detail::finish_record(out, env, bo.name, arm, eps, delta, t0, conf);
    return out;
}

enum class Ablation { XYDiffOnly, XYSafeOnly };

/// Allocation minimizing the unweighted design of the named kind over Z.
inline SimplexWeights ablation_allocation(const ProblemInstance& inst, Ablation which, const AlgorithmOptions& opt = {}) {
    TargetSet ts;
    ts.U = inst.Z;
    if (which == Ablation::XYSafeOnly) {
        ts = TargetSet::columns(inst.Z);
    } else {
        for (Eigen::Index i = 0; i < inst.Z.cols(); ++i)
            for (Eigen::Index j = i + 1; j < inst.Z.cols(); ++j)
                if ((inst.Z.col(i) - inst.Z.col(j)).squaredNorm() > 0.0) ts.refs.emplace_back(static_cast<int>(i), static_cast<int>(j));
        if (ts.refs.empty()) ts = TargetSet::columns(inst.Z);
    }
    std::vector<AllocationGroup> groups;
    for (std::size_t q = 0; q < ts.size(); ++q) groups.push_back({{q, 1.0}});
    const AllocationResult r = solve_allocation(inst.X, ts, groups, opt.design.allocation);
    return mix_with_uniform(r.lambda, opt.design.allocation.eta);
}

/// BESIDE where both the safety and the refinement phases sample from one
/// fixed allocation; each phase still picks its own minimal budget.
inline RunDetail single_design_ablation(Environment& env, double eps, double delta, Ablation which, const ConstantsLedger& k,
                                        const AlgorithmOptions& opt = {}) {
    BesideOptions bo;
    bo.fixed_lambda = ablation_allocation(env.instance(), which, opt);
    bo.name = which == Ablation::XYDiffOnly ? "xy-diff-only" : "xy-safe-only";
    return beside(env, eps, delta, k, opt, bo);
}

/// Elimination variant: safety rounds partition arms into active / safe /
/// discarded, then each round's elimination runs over the survivors.
inline RunDetail beside_elim(Environment& env, double eps, double delta, const AlgorithmOptions& opt = {}) {
    const auto t0 = std::chrono::steady_clock::now();
    const ProblemInstance& inst = env.instance();
    detail::check_run_args(inst, eps, delta);
    ConfidenceLedger conf(delta);
    const RipsConfig rcfg = detail::rips_config_for(inst, opt);
    const auto m = inst.m();
    // Budget split: safety rounds, per-round eliminations, final elimination.
    const double d_safe = delta / 3.0;
    const double d_elim = delta / 3.0;
    const double d_final = delta / 3.0;

    ArmIndices active = iota_indices(static_cast<std::size_t>(inst.Z.cols()));
    ArmIndices safe;
    RunDetail out;
    const int rounds = std::max(1, static_cast<int>(std::ceil(std::log2(1.0 / eps) - 1e-12)));
    double eps_l = 0.5;
    for (int l = 1; l <= rounds; ++l) {
        eps_l = std::ldexp(1.0, -l);
        ArmIndices new_safe;
        ArmIndices still;
        if (!active.empty()) {
            const ArmMatrix Za = detail::columns_of(inst.Z, active);
            const double dconf = d_safe / (2.0 * static_cast<double>(m) * l * l);
            const double na = static_cast<double>(std::max<Eigen::Index>(1, Za.cols()));
            const double lt = 8.0 * std::log(2.0 * na / dconf);
            const DesignProblem p = xy_safe_problem(inst.X, Za, Vector::Zero(Za.cols()), 0.0, 0.0, lt,
                                                    detail::ceil_tau(4.0 * std::log(2.0 * na / dconf)), eps_l / 2.0);
            const Design des = solve_design(p, opt.design);
            const Batch b = env.sample(des.lambda, des.tau, Phase::Safety, l, false, true);
            for (Eigen::Index i = 0; i < m; ++i) conf.charge(dconf);
            const Matrix ds = detail::estimate_safety(inst, b, des.lambda, Za, dconf, rcfg);
            for (std::size_t q = 0; q < active.size(); ++q) {
                const double v = ds.col(static_cast<Eigen::Index>(q)).minCoeff();
                if (v >= 2.0 * eps_l) new_safe.push_back(active[q]);
                else if (v >= -eps_l) still.push_back(active[q]);
            }
        }
        ArmIndices y = safe;
        y.insert(y.end(), new_safe.begin(), new_safe.end());
        std::sort(y.begin(), y.end());
        ArmIndices zall = still;
        zall.insert(zall.end(), y.begin(), y.end());
        std::sort(zall.begin(), zall.end());
        if (zall.empty()) throw NoSafeArmError("beside-elim: every arm was discarded as unsafe");
        if (!y.empty()) {
            const ElimResult er = rage_elim(env, zall, y, eps_l, d_elim / (2.0 * l * l), opt, conf, l);
            safe = er.safe;
            active.clear();
            for (std::size_t z : er.active)
                if (std::find(safe.begin(), safe.end(), z) == safe.end()) active.push_back(z);
        } else {
            active = still;
        }
    }
    ArmIndices fin = active;
    fin.insert(fin.end(), safe.begin(), safe.end());
    std::sort(fin.begin(), fin.end());
    if (fin.empty()) throw NoSafeArmError("beside-elim: no arm survived");
    const ElimResult er = rage_elim(env, fin, fin, eps_l, d_final, opt, conf, rounds + 1);
    std::size_t arm = er.active.front();
    double best = er.last_gap.front();
    for (std::size_t q = 1; q < er.active.size(); ++q)
        if (er.last_gap[q] < best) {
            best = er.last_gap[q];
            arm = er.active[q];
        }
    detail::finish_record(out, env, "beside-elim", arm, eps, delta, t0, conf);
    return out;
}

/// Two-stage baseline: certify every arm's safety to tolerance, then find the
/// best certified arm.
inline RunDetail baseline(Environment& env, double eps, double delta, const AlgorithmOptions& opt = {}) {
    const auto t0 = std::chrono::steady_clock::now();
    const ProblemInstance& inst = env.instance();
    detail::check_run_args(inst, eps, delta);
    ConfidenceLedger conf(delta);
    const RipsConfig rcfg = detail::rips_config_for(inst, opt);
    const auto m = inst.m();
    const double d1 = delta / 2.0;
    const double d2 = delta / 2.0;

    ArmIndices unresolved = iota_indices(static_cast<std::size_t>(inst.Z.cols()));
    ArmIndices certified;
    RunDetail out;
    std::int64_t tau = 0;
    for (int j = 1; !unresolved.empty(); ++j) {
        const ArmMatrix Zu = detail::columns_of(inst.Z, unresolved);
        const double dconf = d1 / (2.0 * static_cast<double>(m) * j * j);
        const double nu = static_cast<double>(Zu.cols());
        const double lt = 8.0 * std::log(2.0 * nu / dconf);
        const std::int64_t tmin = next_power_of_two(4.0 * std::log(2.0 * nu / dconf));
        tau = std::max(tmin, 2 * tau);
        if (tau > opt.design.tau_cap) throw DesignBudgetError("baseline: safety stage exceeded the budget cap");
        std::vector<AllocationGroup> groups;
        const TargetSet ts = TargetSet::columns(Zu);
        for (std::size_t q = 0; q < ts.size(); ++q) groups.push_back({{q, 1.0}});
        const SimplexWeights lam = mix_with_uniform(solve_allocation(inst.X, ts, groups, opt.design.allocation).lambda,
                                                    opt.design.allocation.eta);
        const Batch b = env.sample(lam, tau, Phase::Safety, j, false, true);
        for (Eigen::Index i = 0; i < m; ++i) conf.charge(dconf);
        const Matrix ds = detail::estimate_safety(inst, b, lam, Zu, dconf, rcfg);
        const InfoMatrix A = info_matrix(lam, inst.X, opt.design.allocation.ridge);
        const Vector w = (mahalanobis_sq_cols(Zu, A) * lt / static_cast<double>(tau)).cwiseSqrt();
        ArmIndices next;
        for (std::size_t q = 0; q < unresolved.size(); ++q) {
            const auto qi = static_cast<Eigen::Index>(q);
            bool resolved = true;
            bool safe = true;
            for (Eigen::Index i = 0; i < m; ++i) {
                const double v = ds(i, qi);
                if (w[qi] > std::max(eps / 2.0, std::abs(v) / 2.0)) resolved = false;
                if (v + w[qi] < 0.0) safe = false;
            }
            if (!resolved) next.push_back(unresolved[q]);
            else if (safe) certified.push_back(unresolved[q]);
        }
        unresolved = std::move(next);
    }
    std::sort(certified.begin(), certified.end());
    if (certified.empty()) throw NoSafeArmError("baseline: no arm was certified safe");
    const ElimResult er = rage_elim(env, certified, certified, eps, d2, opt, conf, 0);
    std::size_t arm = er.active.front();
    double best = er.last_gap.front();
    for (std::size_t q = 1; q < er.active.size(); ++q)
        if (er.last_gap[q] < best) {
            best = er.last_gap[q];
            arm = er.active[q];
        }
    detail::finish_record(out, env, "baseline", arm, eps, delta, t0, conf);
    return out;
}

}  // namespace safebai
