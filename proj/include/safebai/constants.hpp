#pragma once

// Algorithm constants and the inequalities they must satisfy for the
// correctness proof to go through.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace safebai {

struct ConstantCheck {
    std::string name;
    double lhs = 0.0;
    double rhs = 0.0;
    bool passed = false;
};

struct ConstantsLedger {
    double c_1 = 0.05978841810030329;
    double c_2 = 0.0600087370242953;
    double c_3 = 0.1;
    double c_4 = 0.1;
    double c_a = 0.0013004532984432395;
    double c_b = 0.41043329378840077;
    double c_c = 0.0014065949472697806;
    double c_d = 0.01;
    double c_e = 0.01;
    double c_f = 0.05978841810030329;
    double c_g = 0.178;
    double c_0 = 0.0001;
    double kappa_safe = 3.0;

    double c_delta() const { return 3.0 * c_d + 3.0 * c_e - c_g; }

    /// The constants under which the analysis holds.
    static ConstantsLedger analysis() { return {}; }

    /// Looser constants for desk-scale simulation. The analysis constants
    /// imply budgets of order 1e9 pulls per round even on two-arm problems;
    /// these keep every structural rule (offsets, safe-set test, Y_end slack)
    /// and only rescale thresholds. They do not satisfy check().
    static ConstantsLedger practical() {
        ConstantsLedger k;
        k.c_1 = 0.5;
        k.c_2 = 0.5;
        k.c_3 = 1.0;
        k.c_4 = 1.0;
        k.c_a = 0.1;
        k.c_b = 1.0;
        k.c_c = 0.25;
        k.c_d = 0.1;
        k.c_e = 0.1;
        k.c_f = 1.0;
        k.c_g = 0.5;
        return k;
    }

    /// Every checkable inequality; a tolerance of 1e-12 absorbs the rounding
    /// in conditions that hold with equality at the published values.
    std::vector<ConstantCheck> check() const {
        const double tol = 1e-12;
        const double cD = c_delta();
        std::vector<ConstantCheck> out;
        auto le = [&](std::string name, double lhs, double rhs) {
            out.push_back({std::move(name), lhs, rhs, lhs <= rhs + tol});
        };
        le("c3(1+cg)/(1-c3) <= 0.2", c_3 * (1.0 + c_g) / (1.0 - c_3), 0.2);
        le("cg <= 0.2", c_g, 0.2);
        le("c0 >= 0.0001", 0.0001, c_0);
        le("c1 <= cf", c_1, c_f);
        le("3(cd+ce) <= c2", 3.0 * (c_d + c_e), c_2);
        le("condition6a: c1(1+2c4) <= c3", c_1 * (1.0 + 2.0 * c_4), c_3);
        le("condition6b: c2(1+2c3+4c4) <= c4", c_2 * (1.0 + 2.0 * c_3 + 4.0 * c_4), c_4);
        const double k4 = 3.0 * c_d + 3.0 * c_e + 6.0 * c_d * c_3 + 12.0 * c_d * c_4 + c_4;
        le("condition4: 3cd+3ce+6cd*c3+12cd*c4+c4 <= 1/4", k4, 0.25);
        le("condition2: 3cd+3ce+6cd*c3+12cd*c4+c4-cg <= 0", k4 - c_g, 0.0);
        le("condition3: 3cd+6cd*c4+c4 <= 1", 3.0 * c_d + 6.0 * c_d * c_4 + c_4, 1.0);
        le("condition1: c0 <= 1-2c3-4c4", c_0, 1.0 - 2.0 * c_3 - 4.0 * c_4);
        le("condition7: c0 <= cd*c0+ce", c_0, c_d * c_0 + c_e);
        le("condition5: c0 <= 1-2c4-cg", c_0, 1.0 - 2.0 * c_4 - c_g);
        le("rage condition1: 2cf(1+cD) <= cb", 2.0 * c_f * (1.0 + cD), c_b);
        const double r2 = 8.0 * (c_a * c_f * (1.0 + cD) + c_c + c_a + 2.0 * c_a * cD) +
                          (8.0 * c_a * (1.0 + c_f) + 1.0) * (6.0 * (c_c + c_a * (1.0 + c_b + 2.0 * cD)));
        le("rage condition2a", r2, c_f);
        le("rage condition2b: 8ca(1+cf) <= cf", 8.0 * c_a * (1.0 + c_f), c_f);
        le("rage condition3a: c0 <= ca(1-cf)", c_0, c_a * (1.0 - c_f));
        le("rage condition3b: c0 <= ca+cc-2ca*cD-ca*cf", c_0, c_a + c_c - 2.0 * c_a * cD - c_a * c_f);
        return out;
    }

    bool valid() const {
        for (const auto& c : check())
            if (!c.passed) return false;
        return true;
    }

    void validate_ranges() const {
        for (double v : {c_1, c_2, c_3, c_4, c_a, c_b, c_c, c_d, c_e, c_f, c_g, kappa_safe})
            if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument("constants must be positive and finite");
    }
};

}  // namespace safebai
