#include <gtest/gtest.h>

#include <random>

#include "safebai/design.hpp"
#include "safebai/instances.hpp"
#include "support/oracles.hpp"

using namespace safebai;

namespace {

DesignProblem basis_problem(int d, double log_term = 10.0, double threshold = 0.1) {
    const Matrix I = Matrix::Identity(d, d);
    return xy_safe_problem(I, I, Vector::Zero(d), 0.0, 0.0, log_term, 1, threshold);
}

double raw_max_quad(const Matrix& X, const Matrix& targets, const SimplexWeights& lam) {
    const Matrix a = oracle::dense_info(lam.weights(), X, 0.0);
    double worst = 0.0;
    for (Eigen::Index k = 0; k < targets.cols(); ++k) worst = std::max(worst, oracle::inv_quad(targets.col(k), a));
    return worst;
}

DesignProblem i1_diff_problem(double alpha) {
    const auto inst = gen_prop1_instance(Prop1Kind::I1, alpha);
    DesignProblem p;
    p.arms_X = inst.X;
    p.targets.U = inst.Z;
    p.targets.refs = {{0, 1}};
    p.offsets = Vector::Zero(1);
    p.log_term = 1.0;
    p.threshold = 0.01;
    return p;
}

}  // namespace

TEST(DesignObjective, DirectFormula) {
    DesignProblem p = basis_problem(2, 3.0);
    const double v = 0.05;
    const double tau = 2.0 * 3.0 / (v * v);
    EXPECT_NEAR(design_objective_at(p, SimplexWeights::uniform(2), tau, 0.0), v, 1e-12);
    EXPECT_NEAR(design_objective(p, SimplexWeights::uniform(2), tau, 0.1, 0.0), v, 1e-12);
}

TEST(DesignObjective, LargeBudgetLeavesOffsets) {
    const Matrix I = Matrix::Identity(3, 3);
    Vector c(3);
    c << 0.2, 0.5, 0.1;
    const DesignProblem p = xy_safe_problem(I, I, c, 0.05, 2.0, 5.0, 1, 0.1);
    const double v = design_objective(p, SimplexWeights::uniform(3), 1e18);
    EXPECT_LE(v, 0.0);
    EXPECT_NEAR(v, -2.0 * (0.1 + 0.05), 1e-6);
}

TEST(DesignObjective, MatchesRecomputation) {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int rep = 0; rep < 10; ++rep) {
        Matrix X(3, 6), Z(3, 5);
        for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = g(rng);
        for (Eigen::Index i = 0; i < Z.size(); ++i) Z.data()[i] = g(rng);
        Vector c(5);
        for (Eigen::Index i = 0; i < 5; ++i) c[i] = std::abs(g(rng));
        const DesignProblem p = xy_safe_problem(X, Z, c, 0.1, 0.3, 7.0, 1, 0.2);
        Vector w(6);
        for (Eigen::Index i = 0; i < 6; ++i) w[i] = std::abs(g(rng)) + 0.01;
        const SimplexWeights lam = SimplexWeights::normalized(w);
        const double tau = 5000.0;
        const Matrix a = oracle::dense_info(lam.weights(), X, 0.0);
        double ref = -1e300;
        for (Eigen::Index k = 0; k < 5; ++k)
            ref = std::max(ref, -0.3 * (c[k] + 0.1) + std::sqrt(oracle::inv_quad(Z.col(k), a) * 7.0 / tau));
        EXPECT_NEAR(design_objective_at(p, lam, tau, 0.0), ref, 1e-10);
    }
}

TEST(SolveDesign, KieferWolfowitzBasis) {
    for (int d : {5, 20}) {
        const Design des = solve_design(basis_problem(d));
        const Matrix I = Matrix::Identity(d, d);
        const double v = raw_max_quad(I, I, des.lambda_raw);
        EXPECT_LE(v, 1.02 * d) << "d=" << d;
        EXPECT_GE(v, d - 1e-9);
    }
}

TEST(SolveDesign, I1DiffAllocationUnregularized) {
    for (double alpha : {0.02, 0.05, 0.08}) {
        DesignOptions opt;
        opt.allocation.eta = 0.0;
        const Design des = solve_design(i1_diff_problem(alpha), opt);
        EXPECT_NEAR(des.lambda_raw[0], 1.0 / (1.0 + 2.0 * alpha), 1e-2);
        EXPECT_NEAR(des.lambda_raw[1], 2.0 * alpha / (1.0 + 2.0 * alpha), 1e-2);
    }
}

TEST(SolveDesign, I1DiffSamplingDistribution) {
    // With the default mixing the sampling distribution itself reaches the
    // optimum whenever it lies above the mixing floor.
    for (double alpha : {0.05, 0.08}) {
        const Design des = solve_design(i1_diff_problem(alpha));
        EXPECT_NEAR(des.lambda[0], 1.0 / (1.0 + 2.0 * alpha), 1e-2);
        EXPECT_NEAR(des.lambda[1], 2.0 * alpha / (1.0 + 2.0 * alpha), 1e-2);
    }
}

TEST(SolveDesign, TwoArmMatchesGrid) {
    Matrix X(2, 2);
    X << 1.0, 0.3,
         0.2, 1.0;
    Matrix Z(2, 3);
    Z << 0.5, -0.4, 0.9,
         0.7, 0.8, -0.1;
    const DesignProblem p = xy_safe_problem(X, Z, Vector::Zero(3), 0.0, 0.0, 1.0, 1, 0.01);
    DesignOptions opt;
    opt.allocation.eta = 0.0;
    const Design des = solve_design(p, opt);
    double grid = 1e300;
    for (int i = 1; i < 20000; ++i) {
        Vector w(2);
        w << i / 20000.0, 1.0 - i / 20000.0;
        grid = std::min(grid, raw_max_quad(X, Z, SimplexWeights(w)));
    }
    EXPECT_LE(raw_max_quad(X, Z, des.lambda_raw), grid * (1.0 + 1e-3));
}

TEST(SolveDesign, HugeOffsetsGiveTauMin) {
    const Matrix I = Matrix::Identity(4, 4);
    const DesignProblem p = xy_safe_problem(I, I, Vector::Constant(4, 1e6), 0.0, 1.0, 10.0, 37, 0.1);
    const Design des = solve_design(p);
    EXPECT_EQ(des.tau, 64);
}

TEST(SolveDesign, CertificateAndMinimality) {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int rep = 0; rep < 15; ++rep) {
        Matrix X(3, 7), Z(3, 6);
        for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = g(rng);
        for (Eigen::Index i = 0; i < Z.size(); ++i) Z.data()[i] = g(rng);
        Vector c(6);
        for (Eigen::Index i = 0; i < 6; ++i) c[i] = std::abs(g(rng)) * 0.3;
        const DesignProblem p = xy_safe_problem(X, Z, c, 0.05, 0.1, 12.0, 8, 0.02);
        const Design des = solve_design(p);
        EXPECT_LE(des.achieved_objective, p.threshold);
        EXPECT_LE(design_objective_at(p, des.lambda, static_cast<double>(des.tau)), p.threshold);
        EXPECT_EQ(des.tau & (des.tau - 1), 0);
        if (des.tau > p.tau_min) {
            EXPECT_GT(design_objective_at(p, des.lambda, des.tau / 2.0), p.threshold);
        }
    }
}

TEST(SolveDesign, FrankWolfeMonotoneWithinStage) {
    const auto inst = gen_random_instance(4, 10, 12, 1, 3);
    const DesignProblem p = xy_safe_problem(inst.X, inst.Z, Vector::Zero(12), 0.0, 0.0, 1.0, 1, 0.1);
    AllocationOptions ao;
    ao.betas = {200.0};
    ao.fw_iters = 300;
    ao.rel_gap_tol = 0.0;
    std::vector<AllocationGroup> groups;
    for (std::size_t k = 0; k < p.targets.size(); ++k) groups.push_back({{k, 1.0}});
    const AllocationResult r = solve_allocation(p.arms_X, p.targets, groups, ao);
    ASSERT_GT(r.smoothed_trace.size(), 2u);
    for (std::size_t i = 1; i < r.smoothed_trace.size(); ++i) EXPECT_LE(r.smoothed_trace[i], r.smoothed_trace[i - 1] + 1e-12);
}

TEST(SolveDesign, LogTermScaling) {
    const DesignProblem p1 = basis_problem(6, 10.0, 0.05);
    DesignProblem p4 = p1;
    p4.log_term *= 4.0;
    const Design d1 = solve_design(p1);
    const Design d4 = solve_design(p4);
    EXPECT_NEAR(d4.tau_star / d1.tau_star, 4.0, 1e-6);
    EXPECT_EQ(d4.tau, 4 * d1.tau);
}

TEST(SolveDesign, BudgetCap) {
    DesignOptions opt;
    opt.tau_cap = 1024;
    EXPECT_THROW(solve_design(basis_problem(5, 10.0, 1e-4), opt), DesignBudgetError);
}

TEST(SolveDesign, BudgetForFixedAllocation) {
    const DesignProblem p = basis_problem(4, 3.0, 0.05);
    const Design des = budget_for_allocation(p, SimplexWeights::uniform(4));
    EXPECT_NEAR(des.tau_star, 3.0 * 4.0 / (0.05 * 0.05), 1e-6 * des.tau_star);
    EXPECT_LE(des.achieved_objective, 0.05);
}

TEST(XySafeProblem, Offsets) {
    const Matrix I = Matrix::Identity(3, 3);
    Vector c(3);
    c << 0.0, 0.2, 0.4;
    const DesignProblem p = xy_safe_problem(I, I, c, 0.25, 0.01, 2.0, 4, 0.1);
    EXPECT_NEAR(p.offsets[0], 0.25, 1e-15);
    EXPECT_NEAR(p.offsets[2], 0.65, 1e-15);
    EXPECT_TRUE(p.targets.dense() == I);
    const DesignProblem z = xy_safe_problem(I, I, Vector::Zero(3), 0.5, 0.01, 2.0, 4, 0.1);
    EXPECT_TRUE(z.offsets.isApprox(Vector::Constant(3, 0.5)));
    EXPECT_THROW(xy_safe_problem(I, I, Vector::Zero(2), 0.25, 0.01, 2.0, 4, 0.1), std::invalid_argument);
    EXPECT_THROW(xy_safe_problem(I, I, -c, 0.25, 0.01, 2.0, 4, 0.1), std::invalid_argument);
}

TEST(XyDiffProblem, TargetsAndOffsets) {
    const auto inst = gen_random_instance(3, 5, 4, 1, 6);
    const Vector y = inst.Z.col(2);
    Vector sn(4), og(4);
    sn << 0.1, 0.0, 0.0, 0.3;
    og << 0.0, 0.2, 0.0, 0.1;
    const DesignProblem p = xy_diff_problem(inst.X, inst.Z, y, sn, og, 0.05, 0.5, 3.0, 2, 0.1);
    const Matrix t = p.targets.dense();
    for (Eigen::Index j = 0; j < 4; ++j) EXPECT_TRUE(t.col(j).isApprox(inst.Z.col(j) - y) || j == 2);
    EXPECT_EQ(t.col(2).norm(), 0.0);
    EXPECT_NEAR(p.offsets[3], 0.45, 1e-15);
    const DesignProblem r1 = xy_diff_problem(inst.X, inst.Z, y, Vector::Zero(4), Vector::Zero(4), 0.5, 0.5, 3.0, 2, 0.1);
    EXPECT_TRUE(r1.offsets.isApprox(Vector::Constant(4, 0.5)));
    EXPECT_THROW(xy_diff_problem(inst.X, inst.Z, y, Vector::Zero(3), og, 0.05, 0.5, 3.0, 2, 0.1), std::invalid_argument);
}
