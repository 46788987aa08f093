#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gdcycles/loss.hpp"

using namespace gdcycles;

TEST(Loss, ClosedFormValuesAtZero) {
    const auto lg = logistic(), sp = squareplus();
    EXPECT_DOUBLE_EQ(lg.eval(0), std::log(2.0));
    EXPECT_DOUBLE_EQ(lg.d1(0), 0.5);
    EXPECT_DOUBLE_EQ(lg.d2(0), 0.25);
    EXPECT_DOUBLE_EQ(sp.eval(0), 1.0);
    EXPECT_DOUBLE_EQ(sp.d1(0), 0.5);
    EXPECT_DOUBLE_EQ(sp.d2(0), 0.25);
}

TEST(Loss, LogisticIsOverflowSafe) {
    const auto lg = logistic();
    EXPECT_DOUBLE_EQ(lg.eval(800), 800.0);
    EXPECT_TRUE(std::isfinite(lg.eval(-800)));
    EXPECT_GE(lg.eval(-800), 0.0);
    EXPECT_DOUBLE_EQ(lg.d1(800), 1.0);
    EXPECT_EQ(lg.d1(-800), 0.0);
    EXPECT_TRUE(std::isfinite(lg.d2(800)));
    // log1p(e^z) at z = 40 computed in extended precision
    EXPECT_NEAR(lg.eval(40), 40.000000000000000004248354255291589, 1e-13);
}

TEST(Loss, SquareplusAvoidsCancellationOnTheLeft) {
    const auto sp = squareplus();
    // (sqrt(z²+4)+z)/2 at z = -1e8 is 1e-8 exactly to double precision.
    EXPECT_NEAR(sp.eval(-1e8), 1e-8, 1e-22);
    EXPECT_GT(sp.d1(-1e8), 0.0);
}

// ℓ(z) − ℓ(−z) = z for both losses: the loss is softplus-like about the ReLU.
TEST(LossProperty, ReflectionIdentity) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-40, 40);
    for (const auto& loss : {logistic(), squareplus()})
        for (int i = 0; i < 500; ++i) {
            const double z = u(rng);
            EXPECT_NEAR(loss.eval(z) - loss.eval(-z), z, 1e-12 * (1 + std::abs(z))) << loss.name << " z=" << z;
            EXPECT_NEAR(loss.d1(z) + loss.d1(-z), 1.0, 1e-14) << loss.name;
            EXPECT_NEAR(loss.d2(z), loss.d2(-z), 1e-15) << loss.name;
        }
}

// Left of zero the derivatives are small and the difference quotients have no
// cancellation, so a plain relative tolerance applies. The right side follows
// from the reflection identity above.
TEST(LossProperty, DerivativesMatchFiniteDifferences) {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(-20, 0);
    for (const auto& loss : {logistic(), squareplus()})
        for (int i = 0; i < 400; ++i) {
            const double z = u(rng), h = 1e-5;
            const double fd1 = (loss.eval(z + h) - loss.eval(z - h)) / (2 * h);
            const double fd2 = (loss.d1(z + h) - loss.d1(z - h)) / (2 * h);
            EXPECT_NEAR(fd1, loss.d1(z), 1e-6 * std::abs(loss.d1(z))) << loss.name << " z=" << z;
            EXPECT_NEAR(fd2, loss.d2(z), 1e-6 * std::abs(loss.d2(z))) << loss.name << " z=" << z;
        }
}

TEST(LossProperty, ReluLimitGapBoundedByScaledValueAtZero) {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(-5, 5);
    for (const auto& loss : {logistic(), squareplus()})
        for (double eps : {0.5, 0.1, 0.01}) {
            for (int i = 0; i < 100; ++i) {
                const double z = u(rng);
                EXPECT_LE(relu_limit_gap(loss, z, eps), eps * eps * loss.eval(0) * (1 + 1e-12)) << loss.name;
            }
        }
    EXPECT_THROW(relu_limit_gap(logistic(), 1.0, 0.0), std::invalid_argument);
}

TEST(Loss, ReluLimitGapExamples) {
    const auto lg = logistic();
    EXPECT_LT(relu_limit_gap(lg, -1.0, 0.05), 1e-9);
    EXPECT_NEAR(relu_limit_gap(lg, 0.0, 0.1), 0.01 * std::log(2.0), 1e-15);
    // ε²·ℓ(z/ε²) − z = ε²·log1p(e^{−z/ε²}) for z > 0. At z = 1 the true gap is
    // far below rounding of ε²ℓ, so only agreement to an ulp of 1 is meaningful;
    // z = 0.01 keeps the gap resolvable and shows the decrease.
    for (double z : {1.0, 0.01}) {
        double prev = 1.0;
        for (double eps : {0.1, 0.05, 0.025}) {
            const double e2 = eps * eps;
            const double direct = e2 * std::log1p(std::exp(-z / e2));
            const double gap = relu_limit_gap(lg, z, eps);
            EXPECT_NEAR(gap, direct, 4e-16 * z);
            if (z < 1.0) {
                EXPECT_LT(gap, prev);
            }
            prev = gap;
        }
    }
}

TEST(LossAssumptions, BothShippedLossesPass) {
    for (const auto& loss : {logistic(), squareplus()}) {
        const auto rep = verify_assumption1(loss);
        EXPECT_TRUE(rep.all_pass()) << loss.name;
        EXPECT_EQ(rep.checks.size(), 7u);
    }
}

struct DoubledSoftplus {
    double eval(double z) const { return 2 * LogisticLoss{}.eval(z); }
    double d1(double z) const { return 2 * LogisticLoss{}.d1(z); }
    double d2(double z) const { return 2 * LogisticLoss{}.d2(z); }
};

struct ShiftedSquare {
    // Positive, convex, but no vanishing left tail and unbounded slope.
    double eval(double z) const { return 1 + z * z; }
    double d1(double z) const { return 2 * z; }
    double d2(double) const { return 2.0; }
};

struct WrongDerivative {
    double eval(double z) const { return LogisticLoss{}.eval(z); }
    double d1(double z) const { return LogisticLoss{}.d1(z) * 0.99; }
    double d2(double z) const { return LogisticLoss{}.d2(z); }
};

TEST(LossAssumptions, ViolationsAreReportedByName) {
    const auto doubled = verify_assumption1(make_loss("doubled", DoubledSoftplus{}));
    EXPECT_FALSE(doubled.check(assumption::derivative_bounds).pass);
    EXPECT_TRUE(doubled.check(assumption::positivity).pass);

    const auto sq = verify_assumption1(make_loss("square", ShiftedSquare{}));
    EXPECT_FALSE(sq.check(assumption::left_tail).pass);
    EXPECT_FALSE(sq.check(assumption::derivative_bounds).pass);
    EXPECT_FALSE(sq.check(assumption::curvature_decay).pass);
    EXPECT_FALSE(sq.all_pass());

    const auto wrong = verify_assumption1(make_loss("wrong", WrongDerivative{}));
    EXPECT_FALSE(wrong.check(assumption::finite_difference).pass);
    EXPECT_THROW(wrong.check("nonexistent"), std::out_of_range);
}

TEST(LossAssumptions, RejectsBadAuditParameters) {
    EXPECT_THROW(verify_assumption1(logistic(), GridSpec{-10, 10, 101}), std::invalid_argument);
    EXPECT_THROW(verify_assumption1(logistic(), {}, {1e-2, 1e-1}), std::invalid_argument);
    EXPECT_THROW(verify_assumption1(logistic(), {}, {0.0}), std::invalid_argument);
}

TEST(Loss, SelectionByName) {
    EXPECT_EQ(loss_by_name("logistic").name, "logistic");
    EXPECT_EQ(loss_by_name("squareplus").name, "squareplus");
    EXPECT_THROW(loss_by_name("hinge"), std::invalid_argument);
}
