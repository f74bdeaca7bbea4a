#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "striplab/attention.hpp"
#include "striplab/verification/generators.hpp"
#include "striplab/verification/oracles.hpp"
#include "test_util.hpp"

using namespace striplab;
using striplab::testing::kPropertyTrials;
using striplab::testing::kTol;
using striplab::testing::seeded_rng;

namespace {

Tensor one_hot(std::size_t k, std::size_t at) {
    Tensor a({k});
    a[at] = 1.0;
    return a;
}

}  // namespace

// Self-attention

TEST(SelfAttention, SingleTokenReturnsValueProjection) {
    auto rng = seeded_rng();
    const auto p = verify::random_attention_params(rng, 3);
    const Tensor x = rng.tensor({3, 1, 1});
    const Tensor expect = matmul(x.reshaped({1, 3}), p.w_v).reshaped({3, 1, 1});
    EXPECT_TENSOR_NEAR(self_attention(x, p), expect, kTol);
}

TEST(SelfAttention, ConstantInputGivesIdenticalPositions) {
    auto rng = seeded_rng(1);
    const auto p = verify::random_attention_params(rng, 2);
    Tensor x({2, 3, 4});
    for (std::size_t i = 0; i < 12; ++i) {
        x[i] = 0.7;
        x[12 + i] = -0.2;
    }
    const Tensor y = self_attention(x, p);
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(y[c * 12 + i], y[c * 12]);
}

TEST(SelfAttention, MatchesPerPairOracle) {
    auto rng = seeded_rng(2);
    for (bool scaled : {false, true}) {
        const auto p = verify::random_attention_params(rng, 2, scaled);
        const Tensor x = rng.tensor({2, 3, 3});
        EXPECT_TENSOR_NEAR(self_attention(x, p), oracle::self_attention(x, p), kTol);
    }
}

TEST(SelfAttention, ScalingFlagChangesResult) {
    auto rng = seeded_rng(3);
    auto p = verify::random_attention_params(rng, 4);
    const Tensor x = rng.tensor({4, 2, 2});
    const Tensor plain = self_attention(x, p);
    p.scale_by_sqrt_d = true;
    EXPECT_GT(max_abs_diff(plain, self_attention(x, p)), 1e-6);
}

TEST(SelfAttention, OutputsLieInConvexHullOfValues) {
    auto rng = seeded_rng(4);
    for (int trial = 0; trial < kPropertyTrials; ++trial) {
        const std::size_t c = rng.index(1, 3), h = rng.index(1, 3), w = rng.index(1, 3);
        const auto p = verify::random_attention_params(rng, c);
        const Tensor x = rng.tensor({c, h, w});
        const Tensor v = matmul(to_tokens(x), p.w_v);
        const Tensor y = to_tokens(self_attention(x, p));
        // A convex combination stays inside the per-channel range of the value rows.
        for (std::size_t ch = 0; ch < c; ++ch) {
            double lo = INFINITY, hi = -INFINITY;
            for (std::size_t n = 0; n < h * w; ++n) {
                lo = std::min(lo, v.at(n, ch));
                hi = std::max(hi, v.at(n, ch));
            }
            for (std::size_t n = 0; n < h * w; ++n) {
                EXPECT_GE(y.at(n, ch), lo - kTol);
                EXPECT_LE(y.at(n, ch), hi + kTol);
            }
        }
    }
}

TEST(SelfAttention, RejectsChannelMismatch) {
    auto rng = seeded_rng(5);
    const auto p = verify::random_attention_params(rng, 3);
    EXPECT_THROW(self_attention(rng.tensor({2, 2, 2}), p), ShapeError);
}

// Strip weights

TEST(StripWeights, ZeroParamsGiveOneHalf) {
    auto rng = seeded_rng(6);
    const StripParams p{Direction::Horizontal, Tensor({5, 3}), Tensor({5})};
    EXPECT_EQ(strip_weights(rng.tensor({3, 4, 4}), p), Tensor({5}, 0.5));
}

TEST(StripWeights, ZeroInputGivesSigmoidOfBias) {
    auto rng = seeded_rng(7);
    const auto p = verify::random_strip_params(rng, Direction::Vertical, 3, 2);
    const Tensor a = strip_weights(Tensor({2, 3, 3}), p);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(a[k], sigmoid(p.bias[k]));
}

TEST(StripWeights, MatchesExplicitComposition) {
    auto rng = seeded_rng(8);
    const auto p = verify::random_strip_params(rng, Direction::Horizontal, 5, 3);
    const Tensor x = rng.tensor({3, 4, 6});
    const Tensor pooled = gap_spatial(x).reshaped({3, 1});
    const Tensor expect = sigmoid(add(matmul(p.weight, pooled).reshaped({5}), p.bias));
    EXPECT_TENSOR_NEAR(strip_weights(x, p), expect, 1e-14);
    const Tensor a = strip_weights(x, p);
    for (double v : a.data()) {
        EXPECT_GT(v, 0.0);
        EXPECT_LT(v, 1.0);
    }
}

TEST(StripParams, ValidationRejectsBadShapes) {
    EXPECT_THROW((StripParams{Direction::Horizontal, Tensor({4, 3}), Tensor({4})}.validate(3)), std::invalid_argument);
    EXPECT_THROW((StripParams{Direction::Horizontal, Tensor({3, 3}), Tensor({2})}.validate(3)), ShapeError);
    EXPECT_THROW((StripParams{Direction::Horizontal, Tensor({3, 2}), Tensor({3})}.validate(3)), ShapeError);
    EXPECT_NO_THROW((StripParams{Direction::Horizontal, Tensor({3, 3}), Tensor({3})}.validate(3)));
    const StdaParams mismatched{{Direction::Horizontal, Tensor({3, 2}), Tensor({3})},
                                {Direction::Vertical, Tensor({5, 2}), Tensor({5})}};
    EXPECT_THROW(mismatched.validate(2), std::invalid_argument);
}

// Strip integration

TEST(StripApply, SingleTapIsScalarGating) {
    auto rng = seeded_rng(9);
    const Tensor x = rng.tensor({2, 3, 4});
    for (Direction d : {Direction::Horizontal, Direction::Vertical})
        EXPECT_EQ(strip_apply(x, Tensor::vector({0.37}), d), scale(x, 0.37));
}

TEST(StripApply, CenteredOneHotIsIdentity) {
    auto rng = seeded_rng(10);
    const Tensor x = rng.tensor({2, 5, 7});
    for (std::size_t k : {1, 3, 5, 7, 9})
        for (Direction d : {Direction::Horizontal, Direction::Vertical})
            EXPECT_EQ(strip_apply(x, one_hot(k, k / 2), d), x);
}

TEST(StripApply, MatchesLoopOracleWithExplicitZeros) {
    auto rng = seeded_rng(11);
    const Tensor x = rng.tensor({2, 5, 7});
    const Tensor a = rng.tensor({3});
    for (Direction d : {Direction::Horizontal, Direction::Vertical})
        EXPECT_TENSOR_NEAR(strip_apply(x, a, d), oracle::strip_apply(x, a, d), kTol);
}

TEST(StripApply, StripLongerThanExtentUsesZeroPadding) {
    // K = 9 on width 2: every output sees the whole row.
    const Tensor x({1, 1, 2}, std::vector<double>{1.0, 10.0});
    Tensor a({9});
    for (std::size_t k = 0; k < 9; ++k) a[k] = static_cast<double>(k + 1);
    const Tensor y = strip_apply(x, a, Direction::Horizontal);
    // y[w] = Σ_k a_k x[w - 4 + k]
    EXPECT_EQ(y[0], a[4] * 1.0 + a[5] * 10.0);
    EXPECT_EQ(y[1], a[3] * 1.0 + a[4] * 10.0);
}

TEST(StripApply, RejectsEvenTapCount) {
    EXPECT_THROW(strip_apply(Tensor({1, 2, 2}), Tensor({2}), Direction::Horizontal), std::invalid_argument);
}

TEST(StripApply, OracleEquivalenceOverRandomGrid) {
    auto rng = seeded_rng(12);
    for (int trial = 0; trial < kPropertyTrials; ++trial) {
        const Tensor x = rng.tensor({rng.index(1, 4), rng.index(1, 9), rng.index(1, 9)});
        const Tensor a = rng.tensor({rng.odd(11)});
        const Direction d = trial % 2 ? Direction::Vertical : Direction::Horizontal;
        EXPECT_TENSOR_NEAR(strip_apply(x, a, d), oracle::strip_apply(x, a, d), kTol);
    }
}

TEST(StripApply, LinearWithFrozenWeights) {
    auto rng = seeded_rng(13);
    for (int trial = 0; trial < kPropertyTrials; ++trial) {
        const Shape s{rng.index(1, 3), rng.index(1, 7), rng.index(1, 7)};
        const Tensor x = rng.tensor(s), y = rng.tensor(s), a = rng.tensor({rng.odd(7)});
        const double alpha = rng.uniform(-3, 3), beta = rng.uniform(-3, 3);
        const Direction d = trial % 2 ? Direction::Vertical : Direction::Horizontal;
        const Tensor lhs = strip_apply(axpy(scale(x, alpha), beta, y), a, d);
        const Tensor rhs = axpy(scale(strip_apply(x, a, d), alpha), beta, strip_apply(y, a, d));
        EXPECT_TENSOR_NEAR(lhs, rhs, kTol);
    }
}

TEST(StripApply, AdjointIdentity) {
    auto rng = seeded_rng(14);
    for (int trial = 0; trial < kPropertyTrials; ++trial) {
        const Shape s{rng.index(1, 3), rng.index(1, 7), rng.index(1, 7)};
        const Tensor x = rng.tensor(s), g = rng.tensor(s), a = rng.tensor({rng.odd(7)});
        const Direction d = trial % 2 ? Direction::Vertical : Direction::Horizontal;
        EXPECT_NEAR(dot(g, strip_apply(x, a, d)), dot(strip_apply_adjoint(g, a, d), x), 1e-11);
    }
}

// STDA

TEST(Stda, FrozenCenterOneHotIsIdentity) {
    auto rng = seeded_rng(15);
    const Tensor x = rng.tensor({3, 6, 5});
    EXPECT_EQ(stda_frozen(x, one_hot(5, 2), one_hot(5, 2)), x);
}

TEST(Stda, SingleTapIsDoubleGating) {
    auto rng = seeded_rng(16);
    const Tensor x = rng.tensor({2, 4, 4});
    const auto p = verify::random_stda_params(rng, 1, 2);
    const auto trace = stda_traced(x, p);
    const double a_h = trace.a_h[0], a_v = trace.a_v[0];
    EXPECT_TENSOR_NEAR(trace.output, scale(x, a_v * a_h), kTol);
    EXPECT_EQ(trace.output, stda(x, p));
}

TEST(Stda, VerticalWeightsComeFromIntermediate) {
    auto rng = seeded_rng(17);
    const Tensor x = rng.tensor({2, 5, 5});
    const auto p = verify::random_stda_params(rng, 3, 2);
    const auto trace = stda_traced(x, p);
    EXPECT_EQ(trace.intermediate, strip_operator(x, p.horizontal));
    EXPECT_EQ(trace.a_v, strip_weights(trace.intermediate, p.vertical));
    EXPECT_TENSOR_NEAR(trace.output, oracle::stda(x, p), kTol);
}

TEST(Stda, FrozenEqualsCorrelationWithEffectiveKernel) {
    auto rng = seeded_rng(18);
    for (int trial = 0; trial < kPropertyTrials; ++trial) {
        const std::size_t k = rng.odd(7);
        const Tensor x = rng.tensor({rng.index(1, 3), rng.index(1, 9), rng.index(1, 9)});
        const Tensor a_h = rng.tensor({k}), a_v = rng.tensor({k});
        EXPECT_TENSOR_NEAR(stda_frozen(x, a_h, a_v), oracle::correlate2d(x, effective_kernel(a_h, a_v)), kTol);
    }
}

TEST(Stda, FramesParallelIsBitIdenticalToSerial) {
    auto rng = seeded_rng(19);
    const auto p = verify::random_stda_params(rng, 5, 3);
    std::vector<Tensor> frames;
    for (int i = 0; i < 11; ++i) frames.push_back(rng.tensor({3, 7, 6}));
    const auto serial = stda_frames(frames, p, Execution::Serial);
    for (unsigned threads : {2u, 3u, 8u, 32u}) {
        const auto parallel = stda_frames(frames, p, Execution::Parallel, threads);
        ASSERT_EQ(parallel.size(), serial.size());
        for (std::size_t i = 0; i < serial.size(); ++i) EXPECT_EQ(parallel[i], serial[i]);
    }
}

TEST(Stda, FramesParallelPropagatesErrors) {
    auto rng = seeded_rng(20);
    const auto p = verify::random_stda_params(rng, 3, 2);
    std::vector<Tensor> frames{rng.tensor({2, 3, 3}), rng.tensor({4, 3, 3}), rng.tensor({2, 3, 3})};
    EXPECT_THROW(stda_frames(frames, p, Execution::Parallel, 3), ShapeError);
}

// Effective kernel

TEST(EffectiveKernel, OneHotGivesCenterOne) {
    const Tensor k = effective_kernel(one_hot(5, 2), one_hot(5, 2));
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(k.at(i, j), i == 2 && j == 2 ? 1.0 : 0.0);
}

TEST(EffectiveKernel, TwoHopCoefficientIsProductOfPathWeights) {
    // K = 3 around a center pixel D: A is one step left of B, B is directly above D.
    // D receives A only through the horizontal step A->B then the vertical step B->D,
    // so its coefficient is w_BD·w_AB.
    const double w_ab = 0.3, w_bb = 0.9, w_cb = 0.2;  // horizontal taps: left, center, right
    const double w_bd = 0.6, w_dd = 0.8, w_below = 0.1;  // vertical taps: above, center, below
    const Tensor a_h = Tensor::vector({w_ab, w_bb, w_cb});
    const Tensor a_v = Tensor::vector({w_bd, w_dd, w_below});
    Tensor x({1, 3, 3});
    x.at(0, 0, 0) = 1.0;  // A: row above D, column left of D
    const Tensor y = stda_frozen(x, a_h, a_v);
    EXPECT_DOUBLE_EQ(y.at(0, 1, 1), w_bd * w_ab);
    EXPECT_DOUBLE_EQ(effective_kernel(a_h, a_v).at(0, 0), w_bd * w_ab);
}

TEST(EffectiveKernel, RejectsLengthMismatch) {
    EXPECT_THROW(effective_kernel(Tensor({3}), Tensor({5})), ShapeError);
}

// FLOP models

TEST(Flops, SelfAttentionUnitScale) {
    const auto f = flops_self_attention(1, 1, 1);
    EXPECT_EQ(f.projections, 3u);
    EXPECT_EQ(f.attention_map, 1u);
    EXPECT_EQ(f.weighted_sum, 1u);
    EXPECT_EQ(f.total, 5u);
}

TEST(Flops, SelfAttentionFormula) {
    const auto f = flops_self_attention(4, 4, 8);
    EXPECT_EQ(f.projections, 3072u);
    EXPECT_EQ(f.attention_map, 2048u);
    EXPECT_EQ(f.weighted_sum, 2048u);
}

TEST(Flops, SelfAttentionQuadraticInPositions) {
    for (std::uint64_t c : {1, 8, 32}) {
        const auto a = flops_self_attention(8, 8, c), b = flops_self_attention(16, 8, c);
        EXPECT_EQ(b.attention_map + b.weighted_sum, 4 * (a.attention_map + a.weighted_sum));
    }
}

TEST(Flops, StdaFormula) {
    EXPECT_EQ(flops_stda(1, 1, 1, 1).integration, 2u);
    EXPECT_EQ(flops_stda(64, 64, 32, 7).integration, 1835008u);
    EXPECT_EQ(flops_stda(32, 64, 32, 7).integration * 2, flops_stda(64, 64, 32, 7).integration);
    const auto f = flops_stda(5, 6, 7, 3);
    EXPECT_EQ(f.weight_branch, 2u * (5 * 6 * 7 + 3 * 7 + 3));
    EXPECT_EQ(f.total, f.integration + f.weight_branch);
}

TEST(Flops, RejectZeroExtents) {
    EXPECT_THROW(flops_self_attention(0, 1, 1), std::invalid_argument);
    EXPECT_THROW(flops_stda(1, 1, 1, 0), std::invalid_argument);
}

TEST(Flops, StdaCheaperOnBenchGrid) {
    for (std::uint64_t s : {8, 16, 32, 64}) {
        const std::uint64_t c = 32, k = 7;
        const std::uint64_t per_pixel_stda = 2 * k * c + 2 * c;
        const std::uint64_t per_pixel_attn = 3 * c * c + 2 * s * s * c;
        ASSERT_LT(per_pixel_stda, per_pixel_attn);
        EXPECT_LT(flops_stda(s, s, c, k).total, flops_self_attention(s, s, c).total);
    }
}
