#pragma once

// Independent reference computations used only by tests: explicit inverses,
// dense sums, brute-force projections and simple statistics.

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "safebai/instances.hpp"

namespace oracle {

using safebai::Matrix;
using safebai::Vector;

inline Matrix dense_info(const Vector& lambda, const Matrix& arms, double ridge) {
    Matrix a = Matrix::Zero(arms.rows(), arms.rows());
    for (Eigen::Index x = 0; x < arms.cols(); ++x) a += lambda[x] * arms.col(x) * arms.col(x).transpose();
    a += ridge * Matrix::Identity(arms.rows(), arms.rows());
    return a;
}

inline double inv_quad(const Vector& v, const Matrix& a) { return v.dot(a.inverse() * v); }

inline double positive(double v) { return v > 0.0 ? v : 0.0; }

struct Truth {
    std::size_t star;
    Vector value;
    Vector safety;  // gamma - mu^T z, m = 1
};

/// Enumerates Z directly.
inline Truth truth_m1(const safebai::ProblemInstance& inst) {
    Truth t;
    const auto n = inst.Z.cols();
    t.value.resize(n);
    t.safety.resize(n);
    double best = -std::numeric_limits<double>::infinity();
    t.star = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
        t.value[j] = inst.theta_star.dot(inst.Z.col(j));
        t.safety[j] = inst.gamma - inst.mu_star.col(0).dot(inst.Z.col(j));
        if (t.safety[j] >= 0.0 && t.value[j] > best) {
            best = t.value[j];
            t.star = static_cast<std::size_t>(j);
        }
    }
    return t;
}

/// Per-branch value of 1/2 p(A k* - b)^T (A G^-1 A^T)^-1 p(A k* - b), with
/// kappa = [theta; mu] and G = I_2 (x) A(lambda). Returned doubled so it is
/// on the scale of ||.||^2 (no 1/2).
inline double quadratic_branch(const Matrix& rows, const Vector& b, const Vector& kappa_star, const Matrix& gamma_inv) {
    const Vector r = rows * kappa_star - b;
    Vector pr = r;
    for (Eigen::Index i = 0; i < pr.size(); ++i) pr[i] = positive(pr[i]);
    const Matrix s = rows * gamma_inv * rows.transpose();
    return 2.0 * 0.5 * pr.dot(s.inverse() * pr);
}

inline double quadratic_projection(const safebai::ProblemInstance& inst, const Vector& lambda) {
    const Truth t = truth_m1(inst);
    const auto d = inst.d();
    const Matrix a = dense_info(lambda, inst.X, 0.0);
    const Matrix ainv = a.inverse();
    Matrix ginv = Matrix::Zero(2 * d, 2 * d);
    ginv.topLeftCorner(d, d) = ainv;
    ginv.bottomRightCorner(d, d) = ainv;
    Vector ks(2 * d);
    ks << inst.theta_star, inst.mu_star.col(0);
    const Vector zs = inst.Z.col(static_cast<Eigen::Index>(t.star));

    // Flip z* unsafe: -mu^T z* <= -gamma.
    Matrix r1 = Matrix::Zero(1, 2 * d);
    r1.block(0, d, 1, d) = -zs.transpose();
    Vector b1(1);
    b1 << -inst.gamma;
    double best = quadratic_branch(r1, b1, ks, ginv);
    for (Eigen::Index j = 0; j < inst.Z.cols(); ++j) {
        if (static_cast<std::size_t>(j) == t.star) continue;
        const Vector z = inst.Z.col(j);
        Matrix rows = Matrix::Zero(2, 2 * d);
        rows.block(0, 0, 1, d) = (zs - z).transpose();
        rows.block(1, d, 1, d) = z.transpose();
        Vector b(2);
        b << 0.0, inst.gamma;
        best = std::min(best, quadratic_branch(rows, b, ks, ginv));
    }
    return best;
}

/// min ||k - k*||^2_G subject to rows k <= b, by an augmented Lagrangian
/// with gradient-descent inner loops in the G-whitened coordinates.
inline double numeric_branch(const Matrix& rows, const Vector& b, const Vector& kappa_star, const Matrix& g) {
    const Eigen::LLT<Matrix> llt(g);
    const Matrix l = llt.matrixL();
    // u = L^T (k - k*): objective ||u||^2, constraint rows L^-T u <= b - rows k*.
    Matrix c = l.triangularView<Eigen::Lower>().solve(rows.transpose()).transpose();
    Vector h = b - rows * kappa_star;
    for (Eigen::Index i = 0; i < c.rows(); ++i) {
        const double nrm = c.row(i).norm();
        c.row(i) /= nrm;
        h[i] /= nrm;
    }
    Vector u = Vector::Zero(kappa_star.size());
    Vector mult = Vector::Zero(h.size());
    const double rho = 10.0;
    const double step = 1.0 / (2.0 + rho * c.squaredNorm());
    for (int outer = 0; outer < 200; ++outer) {
        for (int it = 0; it < 2000; ++it) {
            Vector viol = c * u - h + mult / rho;
            for (Eigen::Index i = 0; i < viol.size(); ++i) viol[i] = std::max(0.0, viol[i]);
            const Vector grad = 2.0 * u + rho * c.transpose() * viol;
            if (grad.norm() < 1e-13) break;
            u -= step * grad;
        }
        Vector nm = mult + rho * (c * u - h);
        for (Eigen::Index i = 0; i < nm.size(); ++i) nm[i] = std::max(0.0, nm[i]);
        const double change = (nm - mult).norm();
        mult = nm;
        if (change < 1e-13) break;
    }
    return u.squaredNorm();
}

inline double numeric_projection(const safebai::ProblemInstance& inst, const Vector& lambda) {
    const Truth t = truth_m1(inst);
    const auto d = inst.d();
    const Matrix a = dense_info(lambda, inst.X, 0.0);
    Matrix g = Matrix::Zero(2 * d, 2 * d);
    g.topLeftCorner(d, d) = a;
    g.bottomRightCorner(d, d) = a;
    Vector ks(2 * d);
    ks << inst.theta_star, inst.mu_star.col(0);
    const Vector zs = inst.Z.col(static_cast<Eigen::Index>(t.star));
    Matrix r1 = Matrix::Zero(1, 2 * d);
    r1.block(0, d, 1, d) = -zs.transpose();
    Vector b1(1);
    b1 << -inst.gamma;
    double best = numeric_branch(r1, b1, ks, g);
    for (Eigen::Index j = 0; j < inst.Z.cols(); ++j) {
        if (static_cast<std::size_t>(j) == t.star) continue;
        const Vector z = inst.Z.col(j);
        Matrix rows = Matrix::Zero(2, 2 * d);
        rows.block(0, 0, 1, d) = (zs - z).transpose();
        rows.block(1, d, 1, d) = z.transpose();
        Vector b(2);
        b << 0.0, inst.gamma;
        best = std::min(best, numeric_branch(rows, b, ks, g));
    }
    return best;
}

inline double slope(const std::vector<double>& x, const std::vector<double>& y) {
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(x.size());
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
        sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
    }
    return sxy / sxx;
}

/// Upper end of a one-sided 95% binomial band around p for n trials.
inline double binomial_upper(double p, int n) { return p + 1.645 * std::sqrt(p * (1.0 - p) / n); }

}  // namespace oracle
