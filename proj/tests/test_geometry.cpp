#include <gtest/gtest.h>

#include <random>

#include "safebai/geometry.hpp"
#include "support/oracles.hpp"

using namespace safebai;

namespace {

Vector random_simplex(std::mt19937_64& rng, Eigen::Index n) {
    std::exponential_distribution<double> e(1.0);
    Vector w(n);
    for (Eigen::Index i = 0; i < n; ++i) w[i] = e(rng);
    return w / w.sum();
}

Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
    std::normal_distribution<double> g(0.0, 1.0);
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = g(rng);
    return m;
}

}  // namespace

TEST(PositivePart, ClampsNegatives) {
    EXPECT_EQ(positive_part(-3.0), 0.0);
    EXPECT_EQ(positive_part(0.0), 0.0);
    EXPECT_EQ(positive_part(2.5), 2.5);
}

TEST(SimplexWeights, RejectsInvalidWeights) {
    EXPECT_THROW(SimplexWeights(Vector::Constant(2, 0.6)), std::invalid_argument);
    Vector neg(2);
    neg << 1.5, -0.5;
    EXPECT_THROW(SimplexWeights{neg}, std::invalid_argument);
    Vector nan(2);
    nan << std::nan(""), 1.0;
    EXPECT_THROW(SimplexWeights{nan}, std::invalid_argument);
    EXPECT_NO_THROW(SimplexWeights(Vector::Constant(4, 0.25)));
}

TEST(SimplexWeights, MixingKeepsFloor) {
    Vector w = Vector::Zero(5);
    w[2] = 1.0;
    const SimplexWeights mixed = mix_with_uniform(SimplexWeights(w), 0.1);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_GE(mixed[i], 0.1 / 5 - 1e-15);
    EXPECT_NEAR(mixed.weights().sum(), 1.0, 1e-12);
}

TEST(InfoMatrix, UniformOverBasis) {
    const InfoMatrix a = info_matrix(SimplexWeights::uniform(2), Matrix::Identity(2, 2), 0.0);
    EXPECT_TRUE(a.matrix().isApprox(0.5 * Matrix::Identity(2, 2)));
}

TEST(InfoMatrix, VertexWithRidge) {
    Vector w(2);
    w << 1.0, 0.0;
    const InfoMatrix a = info_matrix(SimplexWeights(w), Matrix::Identity(2, 2), 1e-9);
    EXPECT_NEAR(a.matrix()(0, 0), 1.0 + 1e-9, 1e-15);
    EXPECT_NEAR(a.matrix()(1, 1), 1e-9, 1e-20);
    EXPECT_EQ(a.matrix()(0, 1), 0.0);
}

TEST(InfoMatrix, MatchesDenseSum) {
    std::mt19937_64 rng(11);
    for (int rep = 0; rep < 20; ++rep) {
        const Matrix arms = random_matrix(rng, 4, 7);
        const Vector lam = random_simplex(rng, 7);
        const InfoMatrix a = info_matrix(SimplexWeights(lam), arms, 1e-6);
        EXPECT_LE((a.matrix() - oracle::dense_info(lam, arms, 1e-6)).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_LE((a.matrix() - a.matrix().transpose()).cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(InfoMatrix, DimensionMismatch) {
    EXPECT_THROW(info_matrix(SimplexWeights::uniform(3), Matrix::Identity(2, 2), 0.0), std::invalid_argument);
    EXPECT_THROW(info_matrix(SimplexWeights::uniform(2), Matrix::Identity(2, 2), -1.0), std::invalid_argument);
}

TEST(InfoMatrix, PermutationEquivariant) {
    std::mt19937_64 rng(5);
    const Matrix arms = random_matrix(rng, 3, 6);
    const Vector lam = random_simplex(rng, 6);
    std::vector<int> perm{3, 0, 5, 1, 4, 2};
    Matrix parms(3, 6);
    Vector plam(6);
    for (int i = 0; i < 6; ++i) {
        parms.col(i) = arms.col(perm[static_cast<std::size_t>(i)]);
        plam[i] = lam[perm[static_cast<std::size_t>(i)]];
    }
    const Matrix a = info_matrix(SimplexWeights(lam), arms, 0.0).matrix();
    const Matrix b = info_matrix(SimplexWeights(plam), parms, 0.0).matrix();
    EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Mahalanobis, BasisExamples) {
    const InfoMatrix a = info_matrix(SimplexWeights::uniform(2), Matrix::Identity(2, 2), 0.0);
    EXPECT_NEAR(mahalanobis_sq(Vector::Unit(2, 0), a), 2.0, 1e-12);
    EXPECT_EQ(mahalanobis_sq(Vector::Zero(2), a), 0.0);
}

TEST(Mahalanobis, MatchesExplicitInverse) {
    std::mt19937_64 rng(3);
    for (int rep = 0; rep < 30; ++rep) {
        const Matrix arms = random_matrix(rng, 5, 8);
        const Vector lam = random_simplex(rng, 8);
        const Vector v = random_matrix(rng, 5, 1).col(0);
        const InfoMatrix a = info_matrix(SimplexWeights(lam), arms, 0.0);
        const double ref = oracle::inv_quad(v, oracle::dense_info(lam, arms, 0.0));
        EXPECT_NEAR(mahalanobis_sq(v, a), ref, 1e-8 * std::max(1.0, ref));
    }
}

TEST(Mahalanobis, BasisInverseWeights) {
    std::mt19937_64 rng(9);
    for (int rep = 0; rep < 10; ++rep) {
        const Vector lam = random_simplex(rng, 6);
        const InfoMatrix a = info_matrix(SimplexWeights(lam), Matrix::Identity(6, 6), 0.0);
        for (Eigen::Index i = 0; i < 6; ++i) EXPECT_NEAR(mahalanobis_sq(Vector::Unit(6, i), a), 1.0 / lam[i], 1e-8 / lam[i]);
    }
}

TEST(Mahalanobis, ConvexAlongSegments) {
    std::mt19937_64 rng(21);
    for (int rep = 0; rep < 50; ++rep) {
        const Matrix arms = random_matrix(rng, 3, 5);
        const Vector v = random_matrix(rng, 3, 1).col(0);
        const Vector l1 = random_simplex(rng, 5);
        const Vector l2 = random_simplex(rng, 5);
        const auto f = [&](const Vector& l) { return mahalanobis_sq(v, info_matrix(SimplexWeights::normalized(l), arms, 0.0)); };
        EXPECT_LE(f(0.5 * (l1 + l2)), 0.5 * (f(l1) + f(l2)) + 1e-9);
    }
}

TEST(Mahalanobis, SingularDirectionRejected) {
    Vector w(2);
    w << 1.0, 0.0;
    const InfoMatrix a = info_matrix(SimplexWeights(w), Matrix::Identity(2, 2), 0.0);
    EXPECT_NEAR(mahalanobis_sq(Vector::Unit(2, 0), a), 1.0, 1e-12);
    EXPECT_THROW(mahalanobis_sq(Vector::Unit(2, 1), a), SingularDesignError);
}

TEST(Mahalanobis, NearSingularFallsBackWithRidge) {
    Matrix arms(2, 2);
    arms << 1.0, 1.0,
            0.0, 1e-9;
    const InfoMatrix a = info_matrix(SimplexWeights::uniform(2), arms, 1e-9);
    const double v = mahalanobis_sq(Vector::Unit(2, 1), a);
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_GT(v, 1e6);
}
