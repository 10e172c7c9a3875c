#include <gtest/gtest.h>

#include <numeric>

#include "safebai/algorithms.hpp"
#include "support/oracles.hpp"

using namespace safebai;

namespace {

ProblemInstance bai_instance() {
    Vector theta(3);
    theta << 0.9, 0.5, 0.2;
    return gen_all_safe_instance(Matrix::Identity(3, 3), theta);
}

std::int64_t budget_sum(const RunDetail& d) {
    std::int64_t s = 0;
    for (const auto& b : d.budgets) s += b.tau;
    return s;
}

void expect_accounting(const RunDetail& d) {
    EXPECT_EQ(d.record.total_pulls, d.record.pulls_phase_safety + d.record.pulls_phase_optimality);
    EXPECT_EQ(d.record.total_pulls, budget_sum(d));
    EXPECT_LE(d.delta_spent, d.record.delta * (1.0 + 1e-12));
    EXPECT_GT(d.delta_spent, 0.0);
}

}  // namespace

TEST(Beside, ReturnsBestArmOnWellSeparatedInstance) {
    const auto inst = bai_instance();
    for (std::uint64_t s = 0; s < 3; ++s) {
        Environment env(inst, s);
        const RunDetail d = beside(env, 0.05, 0.1, ConstantsLedger::practical());
        EXPECT_EQ(d.record.returned_arm, 0u);
        EXPECT_TRUE(d.record.is_eps_good);
        EXPECT_TRUE(d.record.is_eps_safe);
        expect_accounting(d);
    }
}

TEST(Beside, PacOnHardMab) {
    const auto inst = gen_mab_hard_instance(4);
    const int n = 10;
    int bad = 0;
    for (int s = 0; s < n; ++s) {
        Environment env(inst, 100 + static_cast<std::uint64_t>(s));
        const RunDetail d = beside(env, 0.1, 0.1, ConstantsLedger::practical());
        bad += !(d.record.is_eps_good && d.record.is_eps_safe);
        expect_accounting(d);
    }
    EXPECT_LE(bad, 2);
}

TEST(Beside, SafetyDecidedBeforeOptimum) {
    const auto inst = gen_prop1_instance(Prop1Kind::I1, 0.08);
    AlgorithmOptions opt;
    opt.record_tables = true;
    Environment env(inst, 5);
    const RunDetail d = beside(env, 0.2, 0.1, ConstantsLedger::practical(), opt);
    EXPECT_FALSE(d.tables.empty());
    EXPECT_TRUE(d.record.is_eps_safe);
    EXPECT_FALSE(d.y_end.empty());
    for (const auto& t : d.tables) EXPECT_EQ(t.delta_safe_hat.cols(), inst.Z.cols());
}

TEST(Beside, DeterministicPerSeed) {
    const auto inst = gen_mab_hard_instance(3);
    Environment e1(inst, 42), e2(inst, 42);
    const RunDetail a = beside(e1, 0.2, 0.1, ConstantsLedger::practical());
    const RunDetail b = beside(e2, 0.2, 0.1, ConstantsLedger::practical());
    EXPECT_EQ(a.record.returned_arm, b.record.returned_arm);
    EXPECT_EQ(a.record.total_pulls, b.record.total_pulls);
    EXPECT_EQ(a.record.pulls_phase_safety, b.record.pulls_phase_safety);
}

TEST(Beside, RejectsBadArguments) {
    const auto inst = bai_instance();
    Environment env(inst, 1);
    EXPECT_THROW(beside(env, 0.0, 0.1, ConstantsLedger::practical()), std::invalid_argument);
    EXPECT_THROW(beside(env, 0.1, 1.0, ConstantsLedger::practical()), std::invalid_argument);
    auto k = ConstantsLedger::practical();
    k.c_3 = -1.0;
    EXPECT_THROW(beside(env, 0.1, 0.1, k), std::invalid_argument);
    auto unsafe = inst;
    unsafe.gamma = -1.0;
    Environment e2(unsafe, 1);
    EXPECT_THROW(beside(e2, 0.1, 0.1, ConstantsLedger::practical()), NoSafeArmError);
}

TEST(RageEps, SingleArmNeedsNoSamples) {
    const auto inst = bai_instance();
    Environment env(inst, 1);
    ConfidenceLedger conf(0.1);
    const RageResult r = rage_eps(env, {1}, {1}, 0.1, 0.1, Vector::Zero(1), ConstantsLedger::practical(), {}, conf);
    EXPECT_EQ(r.delta_hat.size(), 1);
    EXPECT_EQ(r.delta_hat[0], 0.0);
    EXPECT_EQ(env.total_pulls(), 0);
}

TEST(RageEps, GapsCoverTruth) {
    const auto inst = bai_instance();
    Environment env(inst, 2);
    ConfidenceLedger conf(0.05);
    const ArmIndices all{0, 1, 2};
    const RageResult r = rage_eps(env, all, all, 0.1, 0.05, Vector::Zero(3), ConstantsLedger::practical(), {}, conf);
    const auto t = oracle::truth_m1(inst);
    for (Eigen::Index j = 0; j < 3; ++j) EXPECT_GE(r.delta_hat[j] + 1e-12, t.value[0] - t.value[j] - 0.1);
    EXPECT_EQ(env.optimality_pulls(), env.total_pulls());
    EXPECT_LE(conf.spent(), 0.05);
    EXPECT_THROW(rage_eps(env, all, {5}, 0.1, 0.05, Vector::Zero(3), ConstantsLedger::practical(), {}, conf),
                 std::invalid_argument);
}

TEST(RageElim, FindsBestArm) {
    const auto inst = bai_instance();
    Environment env(inst, 3);
    ConfidenceLedger conf(0.1);
    const ArmIndices all{0, 1, 2};
    const ElimResult r = rage_elim(env, all, all, 0.05, 0.1, {}, conf);
    ASSERT_FALSE(r.active.empty());
    EXPECT_NE(std::find(r.active.begin(), r.active.end(), 0u), r.active.end());
    EXPECT_EQ(r.active.size(), r.last_gap.size());
    EXPECT_LE(conf.spent(), 0.1);
}

TEST(BesideElim, SolvesSmallInstances) {
    for (std::uint64_t s = 0; s < 3; ++s) {
        Environment env(bai_instance(), s);
        const RunDetail d = beside_elim(env, 0.05, 0.1);
        EXPECT_EQ(d.record.returned_arm, 0u);
        expect_accounting(d);
    }
    Environment env(gen_prop1_instance(Prop1Kind::I1, 0.08), 9);
    const RunDetail d = beside_elim(env, 0.1, 0.1);
    EXPECT_TRUE(d.record.is_eps_safe);
    EXPECT_TRUE(d.record.is_eps_good);
}

TEST(Baseline, SolvesSmallInstances) {
    for (std::uint64_t s = 0; s < 3; ++s) {
        Environment env(gen_mab_hard_instance(3), s);
        const RunDetail d = baseline(env, 0.1, 0.1);
        EXPECT_TRUE(d.record.is_eps_good);
        EXPECT_TRUE(d.record.is_eps_safe);
        expect_accounting(d);
        EXPECT_GT(d.record.pulls_phase_safety, 0);
    }
}

TEST(Ablation, AllocationsAreDistributions) {
    const auto inst = gen_random_instance(3, 8, 6, 1, 2);
    for (Ablation a : {Ablation::XYDiffOnly, Ablation::XYSafeOnly}) {
        const SimplexWeights w = ablation_allocation(inst, a);
        EXPECT_NEAR(w.weights().sum(), 1.0, 1e-12);
        EXPECT_GE(w.weights().minCoeff(), 0.1 / 8 - 1e-15);
    }
    Environment env(bai_instance(), 4);
    const RunDetail d = single_design_ablation(env, 0.1, 0.1, Ablation::XYSafeOnly, ConstantsLedger::practical());
    EXPECT_EQ(d.record.algorithm, "xy-safe-only");
    expect_accounting(d);
}
