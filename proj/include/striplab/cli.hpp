#pragma once

// Command implementations behind the `striplab` executable. Argument parsing lives in
// tools/striplab.cpp; everything here takes parsed options and output streams so the
// commands can be driven directly from tests.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "striplab/bench.hpp"
#include "striplab/condition_fusion.hpp"
#include "striplab/diffusion_objectives.hpp"
#include "striplab/tensor_io.hpp"
#include "striplab/verification/suites.hpp"

namespace striplab::cli {

enum ExitCode : int {
    kOk = 0,
    kVerificationFailed = 1,
    kBadArguments = 2,
    kIoError = 3,
};

struct VerifyOptions {
    verify::SuiteOptions suite;
};

inline int cmd_verify(const VerifyOptions& opt, std::ostream& out) {
    out << "# striplab verify seed=" << opt.suite.seed << " cases=" << opt.suite.cases
        << (opt.suite.break_strip_index ? " fault=strip-index" : "") << '\n';
    const bool ok = verify::run_all_suites(opt.suite, out);
    out << (ok ? "verify PASS" : "verify FAIL") << '\n';
    return ok ? kOk : kVerificationFailed;
}

struct BenchOptions {
    bench::BenchConfig config;
    std::optional<std::filesystem::path> out;
};

inline int cmd_bench(const BenchOptions& opt, std::ostream& out, std::ostream& err) {
    try {
        opt.config.validate();
    } catch (const std::invalid_argument& e) {
        err << "striplab bench: " << e.what() << '\n';
        return kBadArguments;
    }
    const auto result = bench::run_bench(opt.config);
    if (opt.out) {
        std::ofstream os(*opt.out);
        if (!os) {
            err << "striplab bench: cannot write " << opt.out->string() << '\n';
            return kIoError;
        }
        bench::write_csv(os, result);
        for (const auto& f : result.fits) out << "slope " << f.op << "=" << f.slope << '\n';
    } else {
        bench::write_csv(out, result);
    }
    return kOk;
}

struct LossesOptions {
    std::filesystem::path fixture_dir;
    std::uint64_t seed = verify::kDefaultSeed;
    std::optional<std::size_t> stride;
};

namespace detail {

/// Extractors built from a fixture's config.json, owned for the duration of a run.
struct LossModels {
    std::vector<std::unique_ptr<FeatureExtractor>> owned;
    std::unique_ptr<SyncScorer> sync;
    std::unique_ptr<LayeredFeatureExtractor> perceptual;
    std::vector<std::size_t> perceptual_layers;
    const FeatureExtractor* video_encoder = nullptr;
};

inline const FeatureExtractor& make_extractor(LossModels& m, const std::string& kind, std::size_t input_size,
                                              std::vector<std::size_t> dims, std::uint64_t seed) {
    if (kind == "frame_mean") {
        m.owned.push_back(std::make_unique<FramewiseMeanExtractor>());
    } else if (kind == "identity") {
        m.owned.push_back(std::make_unique<IdentityExtractor>());
    } else if (kind == "linear") {
        m.owned.push_back(std::make_unique<FixedLinearExtractor>(input_size, std::move(dims), seed));
    } else {
        throw std::invalid_argument("unknown extractor kind '" + kind + "'");
    }
    return *m.owned.back();
}

template <typename T>
T json_or(const nlohmann::json& j, const char* key, T fallback) {
    return j.contains(key) ? j.at(key).get<T>() : fallback;
}

}  // namespace detail

/**
 * Evaluates every loss on a fixture directory holding TSR1 files
 *   schedule.tsr    ᾱ values
 *   latent.tsr      clean clip z₀, F×C×H×W (also the real frames; the decoder is identity)
 *   noise.tsr       sampled ε
 *   noise_pred.tsr  predicted ε
 *   audio.tsr       F×d audio features
 * and an optional config.json choosing timesteps, stride and extractors.
 */
inline int cmd_losses(const LossesOptions& opt, std::ostream& out, std::ostream& err) {
    const auto& dir = opt.fixture_dir;
    ObjectiveInputs in;
    std::optional<DiffusionSchedule> schedule;
    nlohmann::json cfg = nlohmann::json::object();
    try {
        schedule.emplace(load_tsr1(dir / "schedule.tsr"));
        in.latent = load_tsr1(dir / "latent.tsr");
        in.noise = load_tsr1(dir / "noise.tsr");
        in.noise_pred = load_tsr1(dir / "noise_pred.tsr");
        in.audio = load_tsr1(dir / "audio.tsr");
        if (std::filesystem::exists(dir / "config.json")) {
            std::ifstream is(dir / "config.json");
            try {
                cfg = nlohmann::json::parse(is);
            } catch (const nlohmann::json::exception& e) {
                throw FormatError((dir / "config.json").string() + ": " + e.what());
            }
        }
    } catch (const FormatError& e) {
        err << "striplab losses: " << e.what() << '\n';
        return kIoError;
    } catch (const std::invalid_argument& e) {
        err << "striplab losses: " << (dir / "schedule.tsr").string() << ": " << e.what() << '\n';
        return kIoError;
    }

    try {
        if (in.latent.rank() != 4) throw ShapeError("latent.tsr must be F x C x H x W");
        const std::size_t frame_size = in.latent.size() / in.latent.extent(0);
        const std::size_t clip_size = kClipFrames * frame_size;
        const std::size_t audio_clip = kClipFrames * (in.audio.size() / in.audio.extent(0));
        const auto seed = detail::json_or<std::uint64_t>(cfg, "seed", opt.seed);

        std::vector<std::size_t> timesteps;
        if (cfg.contains("timesteps")) {
            timesteps = cfg.at("timesteps").get<std::vector<std::size_t>>();
        } else {
            for (std::size_t t = 0; t < schedule->steps(); ++t) timesteps.push_back(t);
        }
        const std::size_t stride = opt.stride.value_or(detail::json_or<std::size_t>(cfg, "stride", 1));

        detail::LossModels m;
        const auto sync_cfg = detail::json_or<nlohmann::json>(cfg, "sync", nlohmann::json::object());
        const auto sync_dim = detail::json_or<std::size_t>(sync_cfg, "dim", 8);
        const auto& video_embed = detail::make_extractor(m, detail::json_or<std::string>(sync_cfg, "video", "linear"),
                                                         clip_size, {sync_dim}, seed + 1);
        const auto& audio_embed = detail::make_extractor(m, detail::json_or<std::string>(sync_cfg, "audio", "linear"),
                                                         audio_clip, {sync_dim}, seed + 2);
        m.sync = std::make_unique<CosineSyncScorer>(video_embed, audio_embed);

        const auto perc_cfg = detail::json_or<nlohmann::json>(cfg, "perceptual", nlohmann::json::object());
        const auto perc_kind = detail::json_or<std::string>(perc_cfg, "kind", "linear");
        if (perc_kind == "identity") {
            m.perceptual = std::make_unique<IdentityExtractor>();
        } else if (perc_kind == "linear") {
            m.perceptual = std::make_unique<FixedLinearExtractor>(
                frame_size, detail::json_or<std::vector<std::size_t>>(perc_cfg, "dims", {16, 8}), seed + 3);
        } else {
            throw std::invalid_argument("unknown perceptual extractor kind '" + perc_kind + "'");
        }
        if (perc_cfg.contains("layers")) {
            m.perceptual_layers = perc_cfg.at("layers").get<std::vector<std::size_t>>();
        } else {
            for (std::size_t l = 0; l < m.perceptual->num_layers(); ++l) m.perceptual_layers.push_back(l);
        }

        const auto trepa_cfg = detail::json_or<nlohmann::json>(cfg, "trepa", nlohmann::json::object());
        m.video_encoder = &detail::make_extractor(m, detail::json_or<std::string>(trepa_cfg, "kind", "linear"),
                                                  clip_size,
                                                  detail::json_or<std::vector<std::size_t>>(trepa_cfg, "dims", {8}),
                                                  seed + 4);

        const ObjectiveModels models{nullptr, m.sync.get(), m.perceptual.get(), m.perceptual_layers,
                                     m.video_encoder};
        const auto breakdown = evaluate_objectives(in, *schedule, timesteps, stride, models, LossWeights{});
        out << format_loss_report(breakdown);
        return kOk;
    } catch (const nlohmann::json::exception& e) {
        err << "striplab losses: " << (dir / "config.json").string() << ": " << e.what() << '\n';
        return kIoError;
    } catch (const std::exception& e) {
        err << "striplab losses: " << e.what() << '\n';
        return kIoError;
    }
}

struct FilterOptions {
    std::filesystem::path manifest;
    double tau = kDefaultFilterTau;
    double lambda = kDefaultFusionLambda;
    std::optional<std::filesystem::path> projection;  // TSR1 d_a×d_t; identity when absent
    std::optional<std::filesystem::path> bias;        // TSR1 d_a; zeros when absent
    std::optional<std::filesystem::path> out;
};

inline int cmd_filter(const FilterOptions& opt, std::ostream& out, std::ostream& err) {
    if (!(opt.tau >= -1.0 && opt.tau <= 1.0)) {
        err << "striplab filter: --tau must lie in [-1, 1], got " << opt.tau << '\n';
        return kBadArguments;
    }
    try {
        const auto samples = load_manifest(opt.manifest);
        FusionParams params;
        params.lambda = opt.lambda;
        if (opt.projection) {
            params.w = load_tsr1(*opt.projection);
        } else if (!samples.empty()) {
            const std::size_t da = samples.front().audio_feature.size();
            if (samples.front().text_tokens.extent(1) != da) {
                throw ShapeError("text and audio dims differ; supply --proj");
            }
            params.w = Tensor::identity(da);
        } else {
            params.w = Tensor::identity(1);
        }
        params.b = opt.bias ? load_tsr1(*opt.bias) : Tensor({params.w.extent(0)});

        const auto result = filter_dataset(samples, params, opt.tau);
        for (const auto& d : result.diagnostics) err << "striplab filter: degenerate sample " << d << '\n';

        std::ofstream file;
        if (opt.out) {
            file.open(*opt.out);
            if (!file) throw FormatError(opt.out->string() + ": cannot open for writing");
        }
        std::ostream& dst = opt.out ? static_cast<std::ostream&>(file) : out;
        for (const auto& id : result.retained) dst << id << '\n';
        dst << result.summary() << '\n';
        if (opt.out) out << result.summary() << '\n';
        return kOk;
    } catch (const std::exception& e) {
        err << "striplab filter: " << e.what() << '\n';
        return kIoError;
    }
}

}  // namespace striplab::cli
