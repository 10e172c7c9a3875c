#pragma once

// Linear-algebra and simplex primitives shared by every other header.
//
// Arm sets are stored column-major: an ArmMatrix with one arm per column, so
// X.col(i) is the i-th arm and X.cols() the number of arms.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace safebai {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using ArmMatrix = Eigen::MatrixXd;

/// Raised when a design does not span the direction being measured.
class SingularDesignError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline double positive_part(double v) { return v > 0.0 ? v : 0.0; }

/// Probability weights over a finite arm set.
///
/// Construction validates the simplex invariant (non-negative, finite, summing
/// to one within 1e-9); the weights are then renormalized exactly.
class SimplexWeights {
public:
    SimplexWeights() = default;

    explicit SimplexWeights(Vector w) : w_(std::move(w)) {
        if (w_.size() == 0) throw std::invalid_argument("SimplexWeights: empty weight vector");
        for (Eigen::Index i = 0; i < w_.size(); ++i) {
            if (!std::isfinite(w_[i]) || w_[i] < 0.0)
                throw std::invalid_argument("SimplexWeights: entries must be finite and non-negative");
        }
        const double s = w_.sum();
        if (std::abs(s - 1.0) > 1e-9)
            throw std::invalid_argument("SimplexWeights: weights sum to " + std::to_string(s));
        w_ /= s;
    }

    static SimplexWeights uniform(std::size_t n) {
        if (n == 0) throw std::invalid_argument("SimplexWeights::uniform: n must be positive");
        return SimplexWeights(Vector::Constant(static_cast<Eigen::Index>(n), 1.0 / static_cast<double>(n)));
    }

    /// Rescales an arbitrary non-negative vector onto the simplex.
    static SimplexWeights normalized(const Vector& v) {
        const double s = v.sum();
        if (!(s > 0.0)) throw std::invalid_argument("SimplexWeights::normalized: zero mass");
        return SimplexWeights(v / s);
    }

    const Vector& weights() const { return w_; }
    std::size_t size() const { return static_cast<std::size_t>(w_.size()); }
    double operator[](std::size_t i) const { return w_[static_cast<Eigen::Index>(i)]; }

private:
    Vector w_;
};

/// (1 - eta) * lambda + eta * uniform. Keeps every arm's mass >= eta / n.
inline SimplexWeights mix_with_uniform(const SimplexWeights& lambda, double eta) {
    if (eta < 0.0 || eta > 1.0) throw std::invalid_argument("mix_with_uniform: eta must lie in [0, 1]");
    const auto n = static_cast<double>(lambda.size());
    Vector mixed = (1.0 - eta) * lambda.weights();
    mixed.array() += eta / n;
    return SimplexWeights::normalized(mixed);
}

/// A(lambda) = sum_x lambda_x x x^T + ridge * I, kept together with its
/// factorization so repeated Mahalanobis queries stay cheap.
class InfoMatrix {
public:
    InfoMatrix(Matrix m, double ridge) : m_(std::move(m)), ridge_(ridge) {
        m_ = 0.5 * (m_ + m_.transpose());
        const Vector dg = m_.diagonal();
        if (dg.size() > 0 && (m_ - Matrix(dg.asDiagonal())).cwiseAbs().maxCoeff() == 0.0 &&
            dg.minCoeff() > 1e-13 * std::max(1.0, dg.maxCoeff())) {
            // Orthogonal arm sets give an exactly diagonal matrix.
            diag_inv_ = dg.cwiseInverse();
            diagonal_ = true;
            chol_ok_ = true;
            return;
        }
        llt_.compute(m_);
        chol_ok_ = llt_.info() == Eigen::Success;
        if (chol_ok_) {
            // LLT succeeds on some numerically singular matrices; treat a
            // vanishing pivot as a failed factorization.
            const Vector diag = llt_.matrixL().toDenseMatrix().diagonal();
            const double max_pivot = diag.cwiseAbs().maxCoeff();
            chol_ok_ = diag.minCoeff() > 1e-13 * std::max(1.0, max_pivot);
        }
        if (!chol_ok_) {
            eig_.compute(m_);
            const double top = std::max(eig_.eigenvalues().cwiseAbs().maxCoeff(), 1.0);
            floor_ = std::max(ridge_, 1e-12 * top);
        }
    }

    const Matrix& matrix() const { return m_; }
    double ridge() const { return ridge_; }
    Eigen::Index dim() const { return m_.rows(); }
    bool cholesky_ok() const { return chol_ok_; }

    /// Solves A u = v. Falls back to an eigenvalue-floored pseudo-solve when
    /// the Cholesky factorization is unavailable; a direction with mass in the
    /// null space of a ridge-free matrix is rejected.
    Vector solve(const Vector& v) const {
        if (diagonal_) return diag_inv_.cwiseProduct(v);
        if (chol_ok_) return llt_.solve(v);
        const Vector coeff = eig_.eigenvectors().transpose() * v;
        Vector scaled(coeff.size());
        const double vnorm = std::max(v.norm(), 1e-300);
        for (Eigen::Index i = 0; i < coeff.size(); ++i) {
            const double ev = eig_.eigenvalues()[i];
            if (ev <= floor_) {
                if (ridge_ == 0.0 && std::abs(coeff[i]) > 1e-9 * vnorm)
                    throw SingularDesignError("design does not span the requested direction");
                scaled[i] = ridge_ == 0.0 ? 0.0 : coeff[i] / floor_;
            } else {
                scaled[i] = coeff[i] / ev;
            }
        }
        return eig_.eigenvectors() * scaled;
    }

    Matrix solve(const Matrix& v) const {
        if (diagonal_) return diag_inv_.asDiagonal() * v;
        if (chol_ok_) return llt_.solve(v);
        Matrix out(v.rows(), v.cols());
        for (Eigen::Index c = 0; c < v.cols(); ++c) out.col(c) = solve(Vector(v.col(c)));
        return out;
    }

private:
    Matrix m_;
    double ridge_;
    Eigen::LLT<Matrix> llt_;
    bool chol_ok_ = false;
    bool diagonal_ = false;
    Vector diag_inv_;
    Eigen::SelfAdjointEigenSolver<Matrix> eig_;
    double floor_ = 0.0;
};

inline InfoMatrix info_matrix(const SimplexWeights& lambda, const ArmMatrix& arms, double ridge) {
    if (static_cast<Eigen::Index>(lambda.size()) != arms.cols())
        throw std::invalid_argument("info_matrix: |lambda| != number of arms");
    if (ridge < 0.0) throw std::invalid_argument("info_matrix: ridge must be non-negative");
    const Eigen::Index d = arms.rows();
    Matrix a = arms * lambda.weights().asDiagonal() * arms.transpose();
    a += ridge * Matrix::Identity(d, d);
    return InfoMatrix(std::move(a), ridge);
}

/// v^T A^{-1} v via a linear solve.
inline double mahalanobis_sq(const Vector& v, const InfoMatrix& a) {
    if (v.size() != a.dim()) throw std::invalid_argument("mahalanobis_sq: dimension mismatch");
    if (v.squaredNorm() == 0.0) return 0.0;
    return std::max(0.0, v.dot(a.solve(v)));
}

/// Column-wise v_j^T A^{-1} v_j.
inline Vector mahalanobis_sq_cols(const Matrix& vs, const InfoMatrix& a) {
    if (vs.rows() != a.dim()) throw std::invalid_argument("mahalanobis_sq_cols: dimension mismatch");
    const Matrix solved = a.solve(vs);
    Vector out = (vs.array() * solved.array()).colwise().sum().transpose();
    return out.cwiseMax(0.0);
}

inline ArmMatrix arms_from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return ArmMatrix(0, 0);
    const auto d = static_cast<Eigen::Index>(rows.front().size());
    ArmMatrix out(d, static_cast<Eigen::Index>(rows.size()));
    for (std::size_t j = 0; j < rows.size(); ++j) {
        if (static_cast<Eigen::Index>(rows[j].size()) != d)
            throw std::invalid_argument("arms_from_rows: ragged arm list");
        for (Eigen::Index i = 0; i < d; ++i) out(i, static_cast<Eigen::Index>(j)) = rows[j][static_cast<std::size_t>(i)];
    }
    return out;
}

inline ArmMatrix select_columns(const ArmMatrix& arms, std::span<const std::size_t> idx) {
    ArmMatrix out(arms.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = arms.col(static_cast<Eigen::Index>(idx[j]));
    return out;
}

inline std::vector<std::size_t> iota_indices(std::size_t n) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), std::size_t{0});
    return v;
}

}  // namespace safebai
