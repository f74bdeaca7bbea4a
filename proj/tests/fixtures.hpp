#pragma once

// On-disk fixtures shared by the CLI tests and the acceptance binary.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "striplab/condition_fusion.hpp"
#include "striplab/diffusion_objectives.hpp"
#include "striplab/tensor_io.hpp"

namespace striplab::fixtures {

/// Writes each sample's tensors next to a JSON-lines manifest and returns its path.
inline std::filesystem::path write_manifest(const std::filesystem::path& dir,
                                            const std::vector<ConditionedSample>& samples,
                                            const std::string& name = "manifest.jsonl") {
    std::filesystem::create_directories(dir);
    std::ofstream os(dir / name);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        const std::string stem = "s" + std::to_string(i);
        save_tsr1(dir / (stem + "_audio.tsr"), s.audio_feature);
        save_tsr1(dir / (stem + "_text.tsr"), s.text_tokens);
        save_tsr1(dir / (stem + "_emotion.tsr"), s.emotion_embedding);
        const nlohmann::json rec{{"id", s.id},
                                 {"audio", stem + "_audio.tsr"},
                                 {"text", stem + "_text.tsr"},
                                 {"emotion", stem + "_emotion.tsr"}};
        os << rec.dump() << '\n';
    }
    return dir / name;
}

struct BoundaryCase {
    std::vector<ConditionedSample> samples;
    std::vector<std::string> expected_at_08;  // ids with cosine >= 0.8, in input order
};

/**
 * Ten 2-D samples whose fused feature has a prescribed cosine with its emotion
 * embedding. Text tokens are zero, so with any λ and a zero bias the fused feature is
 * the audio feature. The boundary sample uses the (4,3) vs (5,0) pair, whose cosine
 * 20/25 rounds to exactly the double 0.8; the others are rotations of (1,0).
 */
inline BoundaryCase boundary_samples() {
    const std::vector<double> cosines{-0.6, 0.0, 0.5, 0.79, 0.7999999, 0.8, 0.8000001, 0.81, 0.95, 1.0};
    BoundaryCase bc;
    for (std::size_t i = 0; i < cosines.size(); ++i) {
        const double c = cosines[i];
        ConditionedSample s;
        char id[32];
        std::snprintf(id, sizeof id, "cos_%.7f", c);
        s.id = id;
        s.text_tokens = Tensor({1, 2});
        if (c == 0.8) {
            s.audio_feature = Tensor::vector({4.0, 3.0});
            s.emotion_embedding = Tensor::vector({5.0, 0.0});
        } else {
            const double theta = std::acos(c);
            s.audio_feature = Tensor::vector({std::cos(theta), std::sin(theta)});
            s.emotion_embedding = Tensor::vector({2.0, 0.0});
        }
        if (c >= 0.8) bc.expected_at_08.push_back(s.id);
        bc.samples.push_back(std::move(s));
    }
    return bc;
}

struct LossFixtureFiles {
    Tensor schedule;
    Tensor latent;
    Tensor noise;
    Tensor noise_pred;
    Tensor audio;
    nlohmann::json config = nlohmann::json::object();
};

inline void write_loss_fixture(const std::filesystem::path& dir, const LossFixtureFiles& f) {
    std::filesystem::create_directories(dir);
    save_tsr1(dir / "schedule.tsr", f.schedule);
    save_tsr1(dir / "latent.tsr", f.latent);
    save_tsr1(dir / "noise.tsr", f.noise);
    save_tsr1(dir / "noise_pred.tsr", f.noise_pred);
    save_tsr1(dir / "audio.tsr", f.audio);
    if (!f.config.empty()) std::ofstream(dir / "config.json") << f.config.dump(2) << '\n';
}

/// Extractors whose losses are simple means: frame means for sync and alignment, raw
/// pixels for the perceptual term.
inline nlohmann::json mean_extractor_config() {
    return {{"sync", {{"video", "frame_mean"}, {"audio", "frame_mean"}}},
            {"perceptual", {{"kind", "identity"}}},
            {"trepa", {{"kind", "frame_mean"}}}};
}

/**
 * Every component equals 1 exactly. z₀ = ε = 0 and ε̂ = 1 with ᾱ = 0.5 give ẑ₀ = −1
 * everywhere, so the noise, perceptual and alignment MSEs are 1. Audio frame means
 * alternate ±1 and are orthogonal to the constant video frame means, so the sync
 * distance 1 − cos is 1.
 */
inline LossFixtureFiles unit_component_fixture() {
    const Shape clip{kClipFrames, 1, 1, 2};
    LossFixtureFiles f{Tensor::vector({0.5}), Tensor(clip), Tensor(clip), Tensor(clip, 1.0), Tensor({kClipFrames, 2})};
    for (std::size_t t = 0; t < kClipFrames; ++t) {
        const double v = t % 2 ? -1.0 : 1.0;
        f.audio.at(t, 0) = v;
        f.audio.at(t, 1) = v;
    }
    f.config = mean_extractor_config();
    return f;
}

/// ᾱ = 1 and ε̂ = ε, so ẑ₀ equals z₀ bit for bit; audio frame means equal video frame means.
inline LossFixtureFiles self_identical_fixture(std::size_t frames = 18) {
    const Shape clip{frames, 2, 2, 2};
    LossFixtureFiles f{Tensor::vector({1.0}), Tensor(clip), Tensor(clip), Tensor(clip), Tensor({frames, 1})};
    for (std::size_t i = 0; i < f.latent.size(); ++i) {
        f.latent[i] = std::sin(0.37 * static_cast<double>(i)) + 0.5;
        f.noise[i] = std::cos(1.3 * static_cast<double>(i));
    }
    f.noise_pred = f.noise;
    const Tensor means = FramewiseMeanExtractor().extract(f.latent);
    for (std::size_t t = 0; t < frames; ++t) f.audio.at(t, 0) = means[t];
    f.config = mean_extractor_config();
    return f;
}

}  // namespace striplab::fixtures
