#pragma once

// Problem instances, ground-truth gaps and the synthetic generators.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "geometry.hpp"

namespace safebai {

class NoSafeArmError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// X and Z hold one arm per column; mu_star holds one constraint vector per
/// column, so m = mu_star.cols().
struct ProblemInstance {
    ArmMatrix X;
    ArmMatrix Z;
    Vector theta_star;
    Matrix mu_star;
    double gamma = 0.0;
    double noise_sigma = 1.0;

    Eigen::Index d() const { return X.rows(); }
    Eigen::Index m() const { return mu_star.cols(); }
    Eigen::Index n_x() const { return X.cols(); }
    Eigen::Index n_z() const { return Z.cols(); }

    void validate() const {
        if (X.cols() < 1 || Z.cols() < 1) throw std::invalid_argument("instance: X and Z must be non-empty");
        if (mu_star.cols() < 1) throw std::invalid_argument("instance: need at least one constraint");
        const auto dim = X.rows();
        if (dim < 1 || Z.rows() != dim || theta_star.size() != dim || mu_star.rows() != dim)
            throw std::invalid_argument("instance: dimension mismatch");
        if (!X.allFinite() || !Z.allFinite() || !theta_star.allFinite() || !mu_star.allFinite() || !std::isfinite(gamma))
            throw std::invalid_argument("instance: non-finite entries");
        if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma))
            throw std::invalid_argument("instance: noise_sigma must be finite and non-negative");
    }

    /// True when every arm, theta and constraint vector has Euclidean norm <= 1.
    bool within_unit_ball(double tol = 1e-12) const {
        auto ok = [tol](const Matrix& m) {
            for (Eigen::Index j = 0; j < m.cols(); ++j)
                if (m.col(j).norm() > 1.0 + tol) return false;
            return true;
        };
        return ok(X) && ok(Z) && theta_star.norm() <= 1.0 + tol && ok(mu_star);
    }
};

struct TrueGaps {
    std::size_t best_safe_arm = 0;
    Vector delta;
    Matrix delta_safe;  // m x |Z|
    Vector value;

    double min_safety(std::size_t z) const { return delta_safe.col(static_cast<Eigen::Index>(z)).minCoeff(); }
};

/// Row-wise gamma - mu_i^T z for every z in `arms`; returns an m x n matrix.
inline Matrix safety_gaps(const ProblemInstance& inst, const ArmMatrix& arms) {
    Matrix out = -(inst.mu_star.transpose() * arms);
    out.array() += inst.gamma;
    return out;
}

inline TrueGaps true_gaps(const ProblemInstance& inst) {
    inst.validate();
    TrueGaps g;
    g.value = inst.Z.transpose() * inst.theta_star;
    g.delta_safe = safety_gaps(inst, inst.Z);
    std::optional<std::size_t> best;
    for (Eigen::Index j = 0; j < inst.Z.cols(); ++j) {
        if (g.delta_safe.col(j).minCoeff() < 0.0) continue;
        if (!best || g.value[j] > g.value[static_cast<Eigen::Index>(*best)]) best = static_cast<std::size_t>(j);
    }
    if (!best) throw NoSafeArmError("instance has no safe arm in Z");
    g.best_safe_arm = *best;
    g.delta = (g.value[static_cast<Eigen::Index>(*best)] - g.value.array()).matrix();
    return g;
}

/// max over z' with min_i safety gap >= eps of theta^T (z' - z); nullopt when
/// no z' qualifies.
inline std::optional<double> eps_safe_optimality_gap(const ProblemInstance& inst, const Vector& z, double eps) {
    if (eps < 0.0) throw std::invalid_argument("eps_safe_optimality_gap: eps must be non-negative");
    const Matrix sg = safety_gaps(inst, inst.Z);
    const double vz = inst.theta_star.dot(z);
    std::optional<double> best;
    for (Eigen::Index j = 0; j < inst.Z.cols(); ++j) {
        if (sg.col(j).minCoeff() < eps) continue;
        const double v = inst.theta_star.dot(inst.Z.col(j)) - vz;
        if (!best || v > *best) best = v;
    }
    return best;
}

inline std::vector<std::size_t> eps_good_set(const ProblemInstance& inst, double eps) {
    const TrueGaps g = true_gaps(inst);
    const double top = g.value[static_cast<Eigen::Index>(g.best_safe_arm)];
    std::vector<std::size_t> out;
    for (Eigen::Index j = 0; j < inst.Z.cols(); ++j) {
        const bool good = g.value[j] >= top - eps;
        const bool safe = g.delta_safe.col(j).minCoeff() >= -eps;
        if (good && safe) out.push_back(static_cast<std::size_t>(j));
    }
    return out;
}

inline bool is_eps_good(const ProblemInstance& inst, std::size_t z, double eps) {
    const auto set = eps_good_set(inst, eps);
    return std::find(set.begin(), set.end(), z) != set.end();
}

/// Constraint violation of z is at most eps.
inline bool is_eps_safe(const ProblemInstance& inst, std::size_t z, double eps) {
    const Matrix sg = safety_gaps(inst, inst.Z.col(static_cast<Eigen::Index>(z)));
    return sg.minCoeff() >= -eps;
}

enum class Prop1Kind { I1, I2 };

/// The two-arm hard instances. `alpha` must lie in (0, 0.1); the unchecked
/// variant accepts any positive alpha, including values that push arms
/// outside the unit ball (used for epsilon sweeps where alpha tracks eps).
inline ProblemInstance gen_prop1_instance_unchecked(Prop1Kind which, double alpha) {
    if (!(alpha > 0.0)) throw std::invalid_argument("gen_prop1_instance: alpha must be positive");
    ProblemInstance inst;
    inst.X = Matrix::Identity(2, 2);
    inst.Z.resize(2, 2);
    inst.mu_star.resize(2, 1);
    inst.theta_star.resize(2);
    if (which == Prop1Kind::I1) {
        inst.Z << 0.25, 0.75,
                  0.5, 0.5 + alpha;
        inst.theta_star << 1.0, 0.0;
        inst.mu_star << 0.0, 1.0;
        inst.gamma = 0.5 + alpha / 2.0;
    } else {
        inst.Z << 0.5 + alpha * alpha / 2.0, 0.5,
                  0.0, alpha / 2.0;
        inst.theta_star << 0.5, 0.0;
        inst.mu_star << 0.0, 0.0;
        inst.gamma = 1.0;
    }
    return inst;
}

inline ProblemInstance gen_prop1_instance(Prop1Kind which, double alpha) {
    if (!(alpha > 0.0 && alpha < 0.1)) throw std::invalid_argument("gen_prop1_instance: alpha must lie in (0, 0.1)");
    return gen_prop1_instance_unchecked(which, alpha);
}

/// Orthogonal-arm instance where the best arm sits close to the safety
/// boundary and the runner-up is clearly safe.
///
/// theta = [1, 1 - value_gap, 0.1 * (n-k+1)/(n-2) for k >= 3], gamma = 0.5,
/// safety gap of e_1 equal to `safety_margin_best`, every other arm 0.6.
inline ProblemInstance gen_mab_hard_instance(int n_arms, double safety_margin_best = 0.1, double value_gap = 0.05) {
    if (n_arms < 3) throw std::invalid_argument("gen_mab_hard_instance: need at least 3 arms");
    if (!(safety_margin_best > 0.0) || !(value_gap > 0.0) || value_gap >= 0.9)
        throw std::invalid_argument("gen_mab_hard_instance: margin must be positive and value_gap in (0, 0.9)");
    const auto n = static_cast<Eigen::Index>(n_arms);
    ProblemInstance inst;
    inst.X = Matrix::Identity(n, n);
    inst.Z = inst.X;
    inst.gamma = 0.5;
    inst.theta_star = Vector::Zero(n);
    inst.theta_star[0] = 1.0;
    inst.theta_star[1] = 1.0 - value_gap;
    for (Eigen::Index k = 2; k < n; ++k)
        inst.theta_star[k] = 0.1 * static_cast<double>(n - k) / static_cast<double>(n - 2);
    inst.mu_star = Matrix::Constant(n, 1, inst.gamma - 0.6);
    inst.mu_star(0, 0) = inst.gamma - safety_margin_best;
    return inst;
}

/// All arms safe (mu = 0, gamma = 1) with the given arm set and reward vector.
inline ProblemInstance gen_all_safe_instance(const ArmMatrix& arms, const Vector& theta) {
    ProblemInstance inst;
    inst.X = arms;
    inst.Z = arms;
    inst.theta_star = theta;
    inst.mu_star = Matrix::Zero(arms.rows(), 1);
    inst.gamma = 1.0;
    inst.validate();
    return inst;
}

namespace detail {
inline void normalize_columns_to_unit_ball(Matrix& m) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        const double n = m.col(j).norm();
        if (n > 1.0) m.col(j) /= n;
    }
}
}  // namespace detail

/// Gaussian instance: every entry N(0,1), each vector shrunk into the unit
/// ball. gamma starts as a N(0, 0.25) draw and is reset to the median of
/// max_i mu_i^T z when that leaves Z without a safe arm.
inline ProblemInstance gen_random_instance(int d, int n_x, int n_z, int m, std::uint64_t seed) {
    if (d < 1 || n_x < 1 || n_z < 1 || m < 1) throw std::invalid_argument("gen_random_instance: sizes must be positive");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto draw = [&](Eigen::Index r, Eigen::Index c) {
        Matrix out(r, c);
        for (Eigen::Index j = 0; j < c; ++j)
            for (Eigen::Index i = 0; i < r; ++i) out(i, j) = normal(rng);
        detail::normalize_columns_to_unit_ball(out);
        return out;
    };
    ProblemInstance inst;
    inst.X = draw(d, n_x);
    inst.Z = draw(d, n_z);
    Matrix th = draw(d, 1);
    inst.theta_star = th.col(0);
    inst.mu_star = draw(d, m);
    inst.gamma = 0.5 * normal(rng);

    const Matrix loads = inst.mu_star.transpose() * inst.Z;  // m x n_z
    Vector worst = loads.colwise().maxCoeff().transpose();
    bool any_safe = false;
    for (Eigen::Index j = 0; j < worst.size(); ++j) any_safe = any_safe || worst[j] <= inst.gamma;
    if (!any_safe) {
        std::vector<double> w(worst.data(), worst.data() + worst.size());
        std::sort(w.begin(), w.end());
        inst.gamma = w[(w.size() - 1) / 2];
    }
    return inst;
}

// ---------------------------------------------------------------------------
// JSON interchange

inline nlohmann::json matrix_columns_to_json(const Matrix& m) {
    nlohmann::json arr = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        std::vector<double> col(m.col(j).data(), m.col(j).data() + m.rows());
        arr.push_back(col);
    }
    return arr;
}

inline Matrix matrix_columns_from_json(const nlohmann::json& j, Eigen::Index d, const char* what) {
    if (!j.is_array()) throw std::invalid_argument(std::string("instance JSON: '") + what + "' must be an array of vectors");
    Matrix out(d, static_cast<Eigen::Index>(j.size()));
    for (std::size_t c = 0; c < j.size(); ++c) {
        const auto v = j[c].get<std::vector<double>>();
        if (static_cast<Eigen::Index>(v.size()) != d)
            throw std::invalid_argument(std::string("instance JSON: vector in '") + what + "' has wrong dimension");
        for (Eigen::Index i = 0; i < d; ++i) out(i, static_cast<Eigen::Index>(c)) = v[static_cast<std::size_t>(i)];
    }
    return out;
}

inline nlohmann::json instance_to_json(const ProblemInstance& inst) {
    nlohmann::json j;
    j["d"] = inst.d();
    j["m"] = inst.m();
    j["gamma"] = inst.gamma;
    j["noise_sigma"] = inst.noise_sigma;
    j["X"] = matrix_columns_to_json(inst.X);
    j["Z"] = matrix_columns_to_json(inst.Z);
    j["theta_star"] = std::vector<double>(inst.theta_star.data(), inst.theta_star.data() + inst.theta_star.size());
    j["mu_star"] = matrix_columns_to_json(inst.mu_star);
    return j;
}

inline ProblemInstance instance_from_json(const nlohmann::json& j) {
    for (const char* key : {"d", "m", "gamma", "X", "Z", "theta_star", "mu_star"})
        if (!j.contains(key)) throw std::invalid_argument(std::string("instance JSON: missing key '") + key + "'");
    ProblemInstance inst;
    const auto d = j.at("d").get<Eigen::Index>();
    const auto m = j.at("m").get<Eigen::Index>();
    inst.gamma = j.at("gamma").get<double>();
    inst.noise_sigma = j.value("noise_sigma", 1.0);
    inst.X = matrix_columns_from_json(j.at("X"), d, "X");
    inst.Z = matrix_columns_from_json(j.at("Z"), d, "Z");
    const auto th = j.at("theta_star").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(th.size()) != d) throw std::invalid_argument("instance JSON: theta_star has wrong dimension");
    inst.theta_star = Eigen::Map<const Vector>(th.data(), d);
    inst.mu_star = matrix_columns_from_json(j.at("mu_star"), d, "mu_star");
    if (inst.mu_star.cols() != m) throw std::invalid_argument("instance JSON: m does not match mu_star");
    inst.validate();
    return inst;
}

inline ProblemInstance load_instance(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open instance file: " + path);
    nlohmann::json j;
    in >> j;
    return instance_from_json(j);
}

inline void save_instance(const ProblemInstance& inst, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write instance file: " + path);
    out << instance_to_json(inst).dump(2) << '\n';
}

}  // namespace safebai
