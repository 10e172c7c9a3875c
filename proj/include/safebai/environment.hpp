#pragma once

// Simulated bandit environment: Gaussian rewards and constraint responses.

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "estimators.hpp"
#include "instances.hpp"

namespace safebai {

enum class Phase { Safety, Optimality };

struct PhaseBudget {
    Phase phase = Phase::Safety;
    int round = 0;
    std::int64_t tau = 0;
};

/// Observations of one sampling batch grouped by arm.
struct Batch {
    ArmSamples rewards;
    std::vector<ArmSamples> safety;  // one per constraint
};

/// Owns its RNG; never shared between runs.
class Environment {
public:
    Environment(const ProblemInstance& inst, std::uint64_t seed) : inst_(inst), rng_(seed) { inst_.validate(); }

    const ProblemInstance& instance() const { return inst_; }

    /// Draws tau arms i.i.d. from lambda and observes rewards and/or
    /// constraint responses. Every pull is charged to `phase`.
    Batch sample(const SimplexWeights& lambda, std::int64_t tau, Phase phase, int round, bool want_reward,
                 bool want_safety) {
        if (static_cast<Eigen::Index>(lambda.size()) != inst_.X.cols())
            throw std::invalid_argument("Environment::sample: allocation size mismatch");
        if (tau < 1) throw std::invalid_argument("Environment::sample: tau must be positive");
        const auto n = static_cast<std::size_t>(inst_.X.cols());
        const auto m = static_cast<std::size_t>(inst_.m());
        Batch b{ArmSamples(n), std::vector<ArmSamples>(want_safety ? m : 0, ArmSamples(n))};
        const Vector& w = lambda.weights();
        std::discrete_distribution<std::size_t> pick(w.data(), w.data() + w.size());
        const Vector means_r = inst_.X.transpose() * inst_.theta_star;
        const Matrix means_s = inst_.X.transpose() * inst_.mu_star;  // n x m
        const double sigma = inst_.noise_sigma;
        for (std::int64_t t = 0; t < tau; ++t) {
            const std::size_t x = pick(rng_);
            const auto xi = static_cast<Eigen::Index>(x);
            if (want_reward) b.rewards.add(x, means_r[xi] + sigma * normal_(rng_));
            if (want_safety)
                for (std::size_t i = 0; i < m; ++i)
                    b.safety[i].add(x, means_s(xi, static_cast<Eigen::Index>(i)) + sigma * normal_(rng_));
        }
        budgets_.push_back({phase, round, tau});
        total_ += tau;
        (phase == Phase::Safety ? safety_ : optimality_) += tau;
        return b;
    }

    std::int64_t total_pulls() const { return total_; }
    std::int64_t safety_pulls() const { return safety_; }
    std::int64_t optimality_pulls() const { return optimality_; }
    const std::vector<PhaseBudget>& budgets() const { return budgets_; }

private:
    ProblemInstance inst_;
    std::mt19937_64 rng_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::int64_t total_ = 0;
    std::int64_t safety_ = 0;
    std::int64_t optimality_ = 0;
    std::vector<PhaseBudget> budgets_;
};

/// Tracks the failure probability handed to every estimator call so the
/// union bound can be audited.
class ConfidenceLedger {
public:
    explicit ConfidenceLedger(double delta) : delta_(delta) {}

    double charge(double delta) {
        spent_ += delta;
        return delta;
    }
    double budget() const { return delta_; }
    double spent() const { return spent_; }

private:
    double delta_;
    double spent_ = 0.0;
};

}  // namespace safebai
