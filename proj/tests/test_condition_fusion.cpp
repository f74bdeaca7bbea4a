#include <algorithm>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "striplab/condition_fusion.hpp"
#include "striplab/verification/generators.hpp"
#include "striplab/verification/oracles.hpp"
#include "test_util.hpp"

using namespace striplab;
using striplab::testing::kPropertyTrials;
using striplab::testing::kTol;
using striplab::testing::seeded_rng;
using striplab::testing::TempDir;

TEST(Fuse, ZeroLambdaReturnsAudio) {
    auto rng = seeded_rng();
    const auto s = verify::random_sample(rng, "a", 4, 3, 5);
    auto p = verify::random_fusion_params(rng, 4, 3, 0.0);
    EXPECT_EQ(fuse(s, p), s.audio_feature);
}

TEST(Fuse, SingleTokenIdentityProjection) {
    auto rng = seeded_rng(1);
    const auto s = verify::random_sample(rng, "a", 3, 3, 1);
    EXPECT_EQ(fuse(s, FusionParams::identity(3, 1.0)), add(s.audio_feature, s.text_tokens.reshaped({3})));
}

TEST(Fuse, MatchesLoopOracleAtDefaultLambda) {
    auto rng = seeded_rng(2);
    const auto s = verify::random_sample(rng, "a", 5, 7, 4);
    const auto p = verify::random_fusion_params(rng, 5, 7);
    EXPECT_EQ(p.lambda, 0.3);
    EXPECT_TENSOR_NEAR(fuse(s, p), oracle::fuse(s, p), kTol);
}

TEST(Fuse, AffineInAudio) {
    auto rng = seeded_rng(3);
    for (int trial = 0; trial < kPropertyTrials; ++trial) {
        const std::size_t da = rng.index(1, 6), dt = rng.index(1, 6);
        auto s = verify::random_sample(rng, "a", da, dt, rng.index(1, 4));
        const auto p = verify::random_fusion_params(rng, da, dt, rng.uniform(-1, 1));
        const Tensor delta = rng.tensor({da});
        const Tensor base = fuse(s, p);
        s.audio_feature = add(s.audio_feature, delta);
        EXPECT_TENSOR_NEAR(fuse(s, p), add(base, delta), kTol);
    }
}

TEST(Fuse, ShapeErrors) {
    auto rng = seeded_rng(4);
    const auto p = verify::random_fusion_params(rng, 3, 2);
    EXPECT_THROW(fuse(verify::random_sample(rng, "a", 3, 4, 2), p), ShapeError);
    EXPECT_THROW(fuse(verify::random_sample(rng, "a", 2, 2, 2), p), ShapeError);
    auto bad = p;
    bad.lambda = NAN;
    EXPECT_THROW(fuse(verify::random_sample(rng, "a", 3, 2, 2), bad), std::invalid_argument);
    // Zero tokens cannot be represented: a tensor extent of 0 is rejected on construction.
    EXPECT_THROW(Tensor({0, 2}), ShapeError);
}

TEST(Filter, SelfAlignedSampleAlwaysRetained) {
    auto rng = seeded_rng(5);
    auto s = verify::random_sample(rng, "self", 4, 4, 3);
    const auto p = verify::random_fusion_params(rng, 4, 4);
    s.emotion_embedding = fuse(s, p);
    // cos(v, v) may round to 1 - 2^-53, so probe just below 1.
    EXPECT_EQ(filter_dataset({s}, p, 1.0 - 1e-12).retained, std::vector<std::string>{"self"});
}

TEST(Filter, OrthogonalSampleRejected) {
    ConditionedSample s{"orth", Tensor::vector({1, 0}), Tensor({1, 2}), Tensor::vector({0, 3})};
    const auto r = filter_dataset({s}, FusionParams::identity(2), 0.8);
    EXPECT_TRUE(r.retained.empty());
    EXPECT_EQ(r.rejected_below, 1u);
}

TEST(Filter, BoundaryRetainedWithGreaterOrEqual) {
    const auto bc = fixtures::boundary_samples();
    ASSERT_EQ(bc.samples.size(), 10u);
    ASSERT_EQ(cosine_similarity(Tensor::vector({4, 3}), Tensor::vector({5, 0})), 0.8);
    for (double lambda : {0.0, 0.3, 1.0}) {
        const auto r = filter_dataset(bc.samples, FusionParams::identity(2, lambda), 0.8);
        EXPECT_EQ(r.retained, bc.expected_at_08);
        EXPECT_EQ(r.rejected_below, bc.samples.size() - bc.expected_at_08.size());
        EXPECT_NE(std::find(r.retained.begin(), r.retained.end(), "cos_0.8000000"), r.retained.end());
    }
}

TEST(Filter, DegenerateSamplesCountedSeparately) {
    std::vector<ConditionedSample> samples{
        {"ok", Tensor::vector({1, 0}), Tensor({1, 2}), Tensor::vector({1, 0})},
        {"zero_emotion", Tensor::vector({1, 0}), Tensor({1, 2}), Tensor({2})},
        {"zero_fused", Tensor({2}), Tensor({1, 2}), Tensor::vector({1, 0})},
    };
    const auto r = filter_dataset(samples, FusionParams::identity(2), 0.8);
    EXPECT_EQ(r.retained, std::vector<std::string>{"ok"});
    EXPECT_EQ(r.rejected_below, 0u);
    EXPECT_EQ(r.rejected_degenerate, 2u);
    ASSERT_EQ(r.diagnostics.size(), 2u);
    EXPECT_NE(r.diagnostics[0].find("zero_emotion"), std::string::npos);
    EXPECT_EQ(r.summary(), "retained=1 rejected_below=0 rejected_degenerate=2");
}

TEST(Filter, TauOutOfRangeRejected) {
    EXPECT_THROW(filter_dataset({}, FusionParams::identity(2), 1.01), std::invalid_argument);
    EXPECT_THROW(filter_dataset({}, FusionParams::identity(2), -1.5), std::invalid_argument);
    EXPECT_THROW(filter_dataset({}, FusionParams::identity(2), NAN), std::invalid_argument);
    EXPECT_NO_THROW(filter_dataset({}, FusionParams::identity(2), -1.0));
}

namespace {

std::vector<ConditionedSample> random_batch(verify::Rng& rng, std::size_t n, std::size_t da, std::size_t dt) {
    std::vector<ConditionedSample> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(verify::random_sample(rng, "r" + std::to_string(i), da, dt, 2));
    return out;
}

}  // namespace

TEST(Filter, MonotoneInTau) {
    auto rng = seeded_rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        const auto samples = random_batch(rng, 30, 3, 4);
        const auto p = verify::random_fusion_params(rng, 3, 4);
        std::vector<std::string> previous;
        for (int i = 20; i >= -20; --i) {
            const auto kept = filter_dataset(samples, p, i / 20.0).retained;
            // Lower tau keeps a superset, in the same relative order.
            EXPECT_TRUE(std::includes(kept.begin(), kept.end(), previous.begin(), previous.end(),
                                      [&](const std::string& a, const std::string& b) {
                                          return std::stoi(a.substr(1)) < std::stoi(b.substr(1));
                                      }));
            previous = kept;
        }
        EXPECT_EQ(previous.size(), samples.size());
    }
}

TEST(Filter, EmbeddingScaleDoesNotChangeDecision) {
    auto rng = seeded_rng(7);
    auto samples = random_batch(rng, 40, 3, 3);
    const auto p = verify::random_fusion_params(rng, 3, 3);
    const auto before = filter_dataset(samples, p, 0.2).retained;
    for (auto& s : samples) s.emotion_embedding = scale(s.emotion_embedding, rng.uniform(0.5, 64.0));
    EXPECT_EQ(filter_dataset(samples, p, 0.2).retained, before);
}

TEST(Filter, Deterministic) {
    auto rng = seeded_rng(8);
    const auto samples = random_batch(rng, 25, 4, 2);
    const auto p = verify::random_fusion_params(rng, 4, 2);
    const auto a = filter_dataset(samples, p, 0.1), b = filter_dataset(samples, p, 0.1);
    EXPECT_EQ(a.retained, b.retained);
    EXPECT_EQ(a.summary(), b.summary());
}

TEST(Manifest, RoundTripThroughFiles) {
    TempDir dir;
    const auto bc = fixtures::boundary_samples();
    const auto path = fixtures::write_manifest(dir.path(), bc.samples);
    const auto loaded = load_manifest(path);
    ASSERT_EQ(loaded.size(), bc.samples.size());
    for (std::size_t i = 0; i < loaded.size(); ++i) {
        EXPECT_EQ(loaded[i].id, bc.samples[i].id);
        EXPECT_EQ(loaded[i].audio_feature, bc.samples[i].audio_feature);
        EXPECT_EQ(loaded[i].text_tokens, bc.samples[i].text_tokens);
        EXPECT_EQ(loaded[i].emotion_embedding, bc.samples[i].emotion_embedding);
    }
    EXPECT_EQ(filter_dataset(loaded, FusionParams::identity(2), 0.8).retained, bc.expected_at_08);
}

TEST(Manifest, MalformedLinesReportLineNumber) {
    TempDir dir;
    const auto bc = fixtures::boundary_samples();
    const auto path = fixtures::write_manifest(dir.path(), {bc.samples[0]});
    std::string good;
    std::getline(std::ifstream(path) >> std::ws, good);

    const auto expect_line = [&](const std::string& content, std::size_t line) {
        std::ofstream(dir / "bad.jsonl") << content;
        try {
            load_manifest(dir / "bad.jsonl");
            ADD_FAILURE() << "expected ManifestError for: " << content;
        } catch (const ManifestError& e) {
            EXPECT_EQ(e.line(), line) << e.what();
            EXPECT_NE(std::string(e.what()).find("line " + std::to_string(line)), std::string::npos);
        }
    };
    expect_line(good + "\n{not json\n", 2);
    expect_line("# comment\n\n" + good + "\n[1,2]\n", 4);
    expect_line(good + "\n" + R"({"id":"x","audio":"s0_audio.tsr","text":"s0_text.tsr"})" + "\n", 2);
    expect_line(R"({"id":"x","audio":"nope.tsr","text":"s0_text.tsr","emotion":"s0_emotion.tsr"})" "\n", 1);
    expect_line(R"({"id":7,"audio":"s0_audio.tsr","text":"s0_text.tsr","emotion":"s0_emotion.tsr"})" "\n", 1);
    EXPECT_THROW(load_manifest(dir / "absent.jsonl"), FormatError);
}
