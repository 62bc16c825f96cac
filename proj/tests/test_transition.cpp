#include <regstab/transition.hpp>

#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace regstab;
using test::mat;
using test::scalar;

namespace {

const Matrix F1 = mat({{0.8, 0.6}, {-0.1, 0.8}});
const Matrix F2 = mat({{1, 0}, {0, 0.5}});
const Matrix F3 = mat({{1.02, 0.5}, {0.01, 0.75}});

MatrixSequence random_ltv(std::mt19937_64& rng, Eigen::Index n, std::size_t T) {
    std::vector<Matrix> F;
    for (std::size_t t = 0; t < T; ++t)
        F.push_back(test::random_matrix(rng, n, n, 0.6));
    return MatrixSequence::table(std::move(F));
}

} // namespace

TEST(Phi, DiagonalIsIdentity) {
    std::mt19937_64 rng(1);
    const auto F = random_ltv(rng, 3, 10);
    for (std::size_t t = 0; t <= 10; ++t)
        EXPECT_EQ(phi(F, t, t), Matrix::Identity(3, 3));
}

TEST(Phi, LtiIsMatrixPower) {
    const auto F = MatrixSequence::constant(F2);
    EXPECT_TRUE(phi(F, 3, 1).isApprox(mat({{1, 0}, {0, 0.25}}), 1e-15));
    EXPECT_TRUE(phi(MatrixSequence::constant(F1), 7, 2).isApprox(matrix_power(F1, 5), 1e-14));
}

TEST(Phi, Composition) {
    std::mt19937_64 rng(2);
    const auto F = random_ltv(rng, 3, 6);
    EXPECT_TRUE(phi(F, 5, 0).isApprox(phi(F, 5, 2) * phi(F, 2, 0), 1e-12));
}

TEST(Phi, RowAdvanceMatchesDirectProducts) {
    std::mt19937_64 rng(3);
    const auto F = random_ltv(rng, 2, 8);
    PhiRow row = PhiRow::initial(2);
    for (std::size_t t = 1; t <= 8; ++t) {
        row = row.advance(F.at(t - 1));
        ASSERT_EQ(row.t, t);
        for (std::size_t k = 0; k <= t; ++k)
            EXPECT_TRUE(row.blocks[k].isApprox(phi(F, t, k), 1e-12)) << "t=" << t << " k=" << k;
    }
}

TEST(Phi, InvertedIndicesThrow) {
    EXPECT_THROW((void)phi(MatrixSequence::constant(F1), 1, 2), Error);
}

TEST(Bibs, ZeroLoopOnlyCountsIdentity) {
    const auto s = bibs_partial_sums(MatrixSequence::constant(Matrix::Zero(2, 2)), 10);
    for (std::size_t t = 1; t <= 10; ++t)
        EXPECT_DOUBLE_EQ(s.sums[t], 1.0);
}

TEST(Bibs, ScalarHalfConvergesToTwo) {
    const auto s = bibs_partial_sums(MatrixSequence::constant(scalar(0.5)), 60);
    for (std::size_t t = 1; t <= 60; ++t)
        EXPECT_NEAR(s.sums[t], 2.0 - std::pow(2.0, 1.0 - static_cast<double>(t)), 1e-14);
    EXPECT_NEAR(s.sup, 2.0, 1e-14);
}

TEST(Bibs, ScalarOneGrowsLinearly) {
    const auto s = bibs_partial_sums(MatrixSequence::constant(scalar(1.0)), 50);
    for (std::size_t t = 1; t <= 50; ++t)
        EXPECT_DOUBLE_EQ(s.sums[t], static_cast<double>(t));
}

TEST(Summability, ScalarHalfLimits) {
    const auto s = summability_constants(MatrixSequence::constant(scalar(0.5)), 80);
    EXPECT_TRUE(s.converged);
    EXPECT_NEAR(s.D_sum, 2.0, 1e-12);
    EXPECT_NEAR(s.D_bar, 4.0 / 3.0, 1e-12);
    EXPECT_NEAR(s.H_bar, 4.0 / 3.0, 1e-12);
    EXPECT_NEAR(s.bibs_sup, 2.0, 1e-12);
}

TEST(Summability, NilpotentAttainedAtDimension) {
    const auto s = summability_constants(MatrixSequence::constant(mat({{0, 1}, {0, 0}})), 30);
    EXPECT_TRUE(s.converged);
    EXPECT_DOUBLE_EQ(s.D_sum, 2.0);
    EXPECT_DOUBLE_EQ(s.D_bar, 2.0);
    EXPECT_DOUBLE_EQ(s.H_bar, 2.0);
    const auto early = summability_constants(MatrixSequence::constant(mat({{0, 1}, {0, 0}})), 2);
    EXPECT_DOUBLE_EQ(early.D_sum, s.D_sum);
}

TEST(Summability, ScalarOneDiverges) {
    const auto s = summability_constants(MatrixSequence::constant(scalar(1.0)), 40);
    EXPECT_DOUBLE_EQ(s.D_sum, 41.0);
    EXPECT_FALSE(s.converged);
    EXPECT_TRUE(s.diverging());
}

TEST(Summability, OverflowIsFlagged) {
    const auto s = summability_constants(MatrixSequence::constant(scalar(1e10)), 40);
    EXPECT_TRUE(s.overflow);
    EXPECT_TRUE(std::isinf(s.D_bar));
}

TEST(Summability, LtiFastPathMatchesGeneralPath) {
    std::mt19937_64 rng(4);
    const Matrix F = test::random_with_radius(rng, 3, 0.8);
    const auto fast = summability_constants(MatrixSequence::constant(F), 120);
    const auto slow = summability_constants(MatrixSequence::table(std::vector<Matrix>(120, F)), 120);
    EXPECT_NEAR(fast.D_sum, slow.D_sum, 1e-10 * slow.D_sum);
    EXPECT_NEAR(fast.D_bar, slow.D_bar, 1e-10 * slow.D_bar);
    EXPECT_NEAR(fast.H_bar, slow.H_bar, 1e-10 * slow.H_bar);
    EXPECT_NEAR(fast.bibs_sup, slow.bibs_sup, 1e-10 * slow.bibs_sup);
    EXPECT_EQ(fast.converged, slow.converged);
}

TEST(ClassifyLti, FigureLoops) {
    const auto r1 = classify_lti(F1);
    EXPECT_EQ(r1.classification, Stability::AsymptoticallyStable);
    EXPECT_NEAR(*r1.spectral_radius, std::sqrt(0.7), 1e-12);
    ASSERT_TRUE(r1.exp_fit);
    EXPECT_LT(r1.exp_fit->delta, 1.0);

    EXPECT_EQ(classify_lti(F2).classification, Stability::MarginallyStable);

    const auto r3 = classify_lti(F3);
    EXPECT_EQ(r3.classification, Stability::Unstable);
    // trace 1.77, det 0.76
    EXPECT_NEAR(*r3.spectral_radius, 0.5 * (1.77 + std::sqrt(1.77 * 1.77 - 4 * 0.76)), 1e-12);
    EXPECT_FALSE(r3.summable);
}

TEST(ClassifyLti, ExponentialBoundHoldsOnPowers) {
    const auto r = classify_lti(F1);
    Matrix power = Matrix::Identity(2, 2);
    for (int k = 0; k <= 300; ++k) {
        EXPECT_LE(spectral_norm(power), r.exp_fit->d * std::pow(r.exp_fit->delta, k) * (1 + 1e-12));
        power = F1 * power;
    }
}

TEST(ClassifyLtv, PeriodicContraction) {
    std::vector<Matrix> F;
    for (int t = 0; t < 200; ++t)
        F.push_back(t % 2 == 0 ? mat({{2, 0}, {0, 0.5}}) : mat({{0.25, 0}, {0, 0.5}}));
    const auto r = classify_ltv(MatrixSequence::table(std::move(F)), 200);
    EXPECT_EQ(r.classification, Stability::AsymptoticallyStable);
    EXPECT_TRUE(r.full_rank_ok);
}

TEST(ClassifyLtv, IdentityIsMarginal) {
    const auto r = classify_ltv(MatrixSequence::table(std::vector<Matrix>(100, Matrix::Identity(2, 2))), 100);
    EXPECT_EQ(r.classification, Stability::MarginallyStable);
}

TEST(ClassifyLtv, GrowingProductIsUnstable) {
    const auto r = classify_ltv(MatrixSequence::table(std::vector<Matrix>(100, F3)), 100);
    EXPECT_EQ(r.classification, Stability::Unstable);
}

TEST(ClassifyLtv, SingularStepIsFlagged) {
    std::vector<Matrix> F(100, mat({{0.9, 0}, {0, 0.9}}));
    F[37] = mat({{1, 0}, {0, 0}});
    const auto r = classify_ltv(MatrixSequence::table(std::move(F)), 100);
    EXPECT_FALSE(r.full_rank_ok);
}

TEST(ClassifyLtv, WideOscillationIsInconclusive) {
    std::vector<Matrix> F;
    for (int t = 0; t < 100; ++t)
        F.push_back(scalar(t % 2 == 0 ? 1e7 : 1e-7));
    const auto r = classify_ltv(MatrixSequence::table(std::move(F)), 100);
    EXPECT_EQ(r.classification, Stability::Inconclusive);
}

TEST(ClassifyLtv, ShortHorizonIsInconclusive) {
    const auto r = classify_ltv(MatrixSequence::table(std::vector<Matrix>(20, F1)), 20);
    EXPECT_EQ(r.classification, Stability::Inconclusive);
}

TEST(ExponentialFit, ExactGeometricData) {
    std::vector<double> norms;
    for (int t = 0; t <= 40; ++t)
        norms.push_back(3.0 * std::pow(0.7, t));
    const auto fit = exponential_fit(norms);
    EXPECT_NEAR(fit.d, 3.0, 1e-10);
    EXPECT_NEAR(fit.delta, 0.7, 1e-10);
}

TEST(ExponentialFit, ConstantNorms) {
    const auto fit = exponential_fit(std::vector<double>(30, 2.5));
    EXPECT_NEAR(fit.delta, 1.0, 1e-14);
}

TEST(ExponentialFit, RateOfStableFigureLoop) {
    // The tail-half fit at T=200 lands within 5e-5 of ρ but marginally below it,
    // so the check is closeness to ρ rather than δ >= ρ.
    const auto s = summability_constants(MatrixSequence::constant(F1), 200);
    const auto fit = exponential_fit(s.phi_norms);
    EXPECT_NEAR(fit.delta, std::sqrt(0.7), 1e-3);
    EXPECT_LT(fit.delta, 1.0);
}

TEST(ExponentialFit, TooFewSamplesThrows) {
    EXPECT_THROW((void)exponential_fit({1.0, 0.5, 0.25}), Error);
}
