#pragma once

// Randomized verification suites behind `striplab verify` and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <stdexcept>
#include <ostream>
#include <string>
#include <vector>

#include "striplab/attention.hpp"
#include "striplab/condition_fusion.hpp"
#include "striplab/diffusion_objectives.hpp"
#include "striplab/temporal_graph.hpp"
#include "striplab/verification/generators.hpp"
#include "striplab/verification/grad_check.hpp"
#include "striplab/verification/oracles.hpp"
#include "striplab/verification/probes.hpp"
#include "striplab/verification/random.hpp"

namespace striplab::verify {

/// Absolute agreement required between an optimized kernel and its loop oracle.
inline constexpr double kOracleTolerance = 1e-12;
inline constexpr double kGradStep = 1e-5;
inline constexpr double kGradTolerance = 1e-6;
inline constexpr double kFaultScale = 1.01;

struct OracleReport {
    std::string op_name;
    double max_abs_diff = 0.0;
    std::size_t num_cases = 0;
    bool passed = false;
};

struct SuiteOptions {
    std::uint64_t seed = kDefaultSeed;
    std::size_t cases = 100;
    /// Replaces strip_apply with a copy that reads taps in reverse order. Used to
    /// confirm the oracle suite catches indexing faults.
    bool break_strip_index = false;
};

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", v);
    return buf;
}

inline std::string format_report(const OracleReport& r) {
    return "oracle op=" + r.op_name + " cases=" + std::to_string(r.num_cases) +
           " max_abs_diff=" + format_double(r.max_abs_diff) + (r.passed ? " PASS" : " FAIL");
}

inline std::string format_report(const GradCheckReport& r) {
    return "gradcheck op=" + r.op_name + " max_rel_error=" + format_double(r.max_rel_error) +
           " worst_index=" + format_index(r.worst_index) + " step=" + format_double(r.step) +
           (r.non_finite ? " non_finite=" + std::to_string(r.non_finite) : std::string()) +
           (r.passed ? " PASS" : " FAIL");
}

namespace detail {

class OracleRun {
public:
    explicit OracleRun(std::string name) { report_.op_name = std::move(name); }

    void record(double diff) {
        // NaN must fail, so compare with the negated predicate.
        if (!(diff <= report_.max_abs_diff)) report_.max_abs_diff = std::isnan(diff) ? INFINITY : diff;
        ++report_.num_cases;
    }
    void record(const Tensor& fast, const Tensor& slow) {
        record(fast.shape() == slow.shape() ? max_abs_diff(fast, slow) : INFINITY);
    }

    OracleReport finish() {
        report_.passed = report_.num_cases > 0 && report_.max_abs_diff < kOracleTolerance;
        return report_;
    }

private:
    OracleReport report_;
};

inline Tensor reversed_taps_strip_apply(const Tensor& x, const Tensor& a, Direction dir) {
    Tensor r(a.shape());
    for (std::size_t k = 0; k < a.size(); ++k) r[k] = a[a.size() - 1 - k];
    return strip_apply(x, r, dir);
}

/// Small 16-frame clip fixture shared by the loss checks.
struct LossFixture {
    std::size_t c, h, w, audio_dim;
    FixedLinearExtractor video_embed, audio_embed, perceptual, video_encoder;
    CosineSyncScorer scorer;

    LossFixture(std::size_t c_, std::size_t h_, std::size_t w_, std::size_t d, std::uint64_t seed)
        : c(c_), h(h_), w(w_), audio_dim(d),
          video_embed(kClipFrames * c_ * h_ * w_, {8}, seed + 1),
          audio_embed(kClipFrames * d, {8}, seed + 2),
          perceptual(c_ * h_ * w_, {12, 6}, seed + 3),
          video_encoder(kClipFrames * c_ * h_ * w_, {10}, seed + 4),
          scorer(video_embed, audio_embed) {}

    Shape clip_shape() const { return {kClipFrames, c, h, w}; }
    Shape frame_shape() const { return {c, h, w}; }
};

}  // namespace detail

inline std::vector<OracleReport> run_oracle_suite(const SuiteOptions& opt) {
    Rng rng(opt.seed);
    std::vector<OracleReport> out;
    const std::size_t n = opt.cases;

    {
        detail::OracleRun run("oracle_matmul");
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t m = rng.index(1, 8), k = rng.index(1, 8), q = rng.index(1, 8);
            const Tensor a = rng.tensor({m, k}), b = rng.tensor({k, q});
            run.record(matmul(a, b), oracle::matmul(a, b));
        }
        out.push_back(run.finish());
    }
    {
        detail::OracleRun run("oracle_strip_weights");
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t c = rng.index(1, 5), k = rng.odd(9);
            const Tensor x = rng.tensor({c, rng.index(1, 8), rng.index(1, 8)});
            const auto p = random_strip_params(rng, Direction::Horizontal, k, c);
            run.record(strip_weights(x, p), oracle::strip_weights(x, p));
        }
        out.push_back(run.finish());
    }
    {
        detail::OracleRun run("oracle_strip_apply");
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t c = rng.index(1, 4), k = rng.odd(9);
            const Tensor x = rng.tensor({c, rng.index(1, 9), rng.index(1, 9)});
            const Tensor a = rng.tensor({k});
            const Direction dir = i % 2 ? Direction::Vertical : Direction::Horizontal;
            const Tensor fast = opt.break_strip_index ? detail::reversed_taps_strip_apply(x, a, dir)
                                                      : strip_apply(x, a, dir);
            run.record(fast, oracle::strip_apply(x, a, dir));
        }
        out.push_back(run.finish());
    }
    {
        detail::OracleRun run("oracle_stda");
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t c = rng.index(1, 4), k = rng.odd(7);
            const Tensor x = rng.tensor({c, rng.index(1, 9), rng.index(1, 9)});
            const auto p = random_stda_params(rng, k, c);
            run.record(stda(x, p), oracle::stda(x, p));
        }
        out.push_back(run.finish());
    }
    {
        detail::OracleRun run("oracle_self_attention");
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t c = rng.index(1, 4);
            const Tensor x = rng.tensor({c, rng.index(1, 5), rng.index(1, 5)});
            const auto p = random_attention_params(rng, c, i % 2 == 1);
            run.record(self_attention(x, p), oracle::self_attention(x, p));
        }
        out.push_back(run.finish());
    }
    {
        detail::OracleRun run("oracle_frame_pool");
        for (std::size_t i = 0; i < n; ++i) {
            const Tensor x = rng.tensor({rng.index(1, 2), rng.index(1, 3), rng.index(1, 4), rng.index(1, 4),
                                         rng.index(1, 4)});
            run.record(frame_pool(x), oracle::frame_pool(x));
        }
        out.push_back(run.finish());
    }
    {
        detail::OracleRun run("oracle_gnn_forward");
        const Activation acts[] = {Activation::Identity, Activation::ReLU, Activation::Tanh};
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t c = rng.index(1, 5);
            const auto g = ChainGraph::over(rng.tensor({rng.index(1, 3), rng.index(1, 8), c}));
            const auto p = random_gnn_params(rng, c, rng.index(1, 3), acts[i % 3]);
            run.record(gnn_forward(g, p), oracle::gnn_forward(g.nodes, g.edges, p));
        }
        out.push_back(run.finish());
    }
    {
        detail::OracleRun run("oracle_broadcast_add");
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t b = rng.index(1, 2), c = rng.index(1, 3), t = rng.index(1, 4);
            const Tensor x = rng.tensor({b, c, t, rng.index(1, 4), rng.index(1, 4)});
            const Tensor f = rng.tensor({b, t, c});
            run.record(broadcast_add(x, f), oracle::broadcast_add(x, f));
        }
        out.push_back(run.finish());
    }
    {
        detail::OracleRun run("oracle_object_branch");
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t b = rng.index(1, 2), c = rng.index(1, 3), t = rng.index(1, 4), objs = rng.index(1, 4);
            const Tensor x = rng.tensor({b, c, t, rng.index(1, 3), rng.index(1, 3)});
            const ObjectFeatures o{rng.tensor({b, t, objs, c})};
            const auto p = random_gnn_params(rng, c, rng.index(1, 2));
            run.record(object_branch(x, o, p), oracle::object_branch(x, o, p));
        }
        out.push_back(run.finish());
    }
    {
        detail::OracleRun run("oracle_tfrm");
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t b = rng.index(1, 2), c = rng.index(1, 4), t = rng.index(1, 6);
            const Tensor x = rng.tensor({b, c, t, rng.index(1, 4), rng.index(1, 4)});
            const auto p = random_gnn_params(rng, c, rng.index(1, 3));
            std::optional<ObjectBranch> objects;
            if (i % 2) objects = ObjectBranch{{rng.tensor({b, t, rng.index(1, 3), c})}, random_gnn_params(rng, c, 1)};
            run.record(tfrm(x, p, objects), oracle::tfrm(x, p, objects));
        }
        out.push_back(run.finish());
    }
    {
        detail::OracleRun run("oracle_fuse");
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t da = rng.index(1, 8), dt = rng.index(1, 8);
            const auto s = random_sample(rng, "s", da, dt, rng.index(1, 6));
            const auto p = random_fusion_params(rng, da, dt, i % 2 ? kDefaultFusionLambda : rng.uniform());
            run.record(fuse(s, p), oracle::fuse(s, p));
        }
        out.push_back(run.finish());
    }

    const detail::LossFixture fx(2, 3, 3, 4, opt.seed);
    const auto schedule = DiffusionSchedule::linear(50);
    {
        detail::OracleRun run("oracle_noise_loss");
        for (std::size_t i = 0; i < n; ++i) {
            const Shape s{rng.index(1, 6), rng.index(1, 6)};
            const Tensor a = rng.tensor(s), b = rng.tensor(s);
            run.record(std::abs(noise_loss(a, b) - oracle::noise_loss(a, b)));
        }
        out.push_back(run.finish());
    }
    {
        detail::OracleRun run("oracle_estimate_clean_latent");
        for (std::size_t i = 0; i < n; ++i) {
            const Tensor z = rng.tensor({rng.index(1, 6), rng.index(1, 6)});
            const Tensor e = rng.tensor(z.shape());
            const double ab = schedule.alpha_bar(rng.index(0, schedule.steps() - 1));
            run.record(estimate_clean_latent(z, e, ab), oracle::estimate_clean_latent(z, e, ab));
        }
        out.push_back(run.finish());
    }
    {
        detail::OracleRun run("oracle_sync_loss");
        for (std::size_t i = 0; i < n; ++i) {
            const ClipWindow clip{0, rng.tensor(fx.clip_shape()), rng.tensor({kClipFrames, fx.audio_dim})};
            run.record(std::abs(sync_loss(clip, fx.scorer) - oracle::sync_loss(clip, fx.scorer)));
        }
        out.push_back(run.finish());
    }
    {
        detail::OracleRun run("oracle_lpips_loss");
        const std::vector<std::vector<std::size_t>> layer_sets{{0}, {1}, {0, 1}, {1, 0}};
        for (std::size_t i = 0; i < n; ++i) {
            const Tensor a = rng.tensor(fx.frame_shape()), b = rng.tensor(fx.frame_shape());
            const auto& layers = layer_sets[i % layer_sets.size()];
            run.record(std::abs(lpips_loss(a, b, fx.perceptual, layers) - oracle::lpips_loss(a, b, fx.perceptual, layers)));
        }
        out.push_back(run.finish());
    }
    {
        detail::OracleRun run("oracle_trepa_loss");
        for (std::size_t i = 0; i < n; ++i) {
            const Tensor a = rng.tensor(fx.clip_shape()), b = rng.tensor(fx.clip_shape());
            run.record(std::abs(trepa_loss(a, b, fx.video_encoder) - oracle::trepa_loss(a, b, fx.video_encoder)));
        }
        out.push_back(run.finish());
    }
    {
        detail::OracleRun run("oracle_total_loss");
        for (std::size_t i = 0; i < n; ++i) {
            const LossComponents c{rng.uniform(0, 2), rng.uniform(0, 2), rng.uniform(0, 2), rng.uniform(0, 2)};
            const LossWeights w = i % 2 ? LossWeights{} : LossWeights{rng.uniform(0, 1), rng.uniform(0, 1),
                                                                       rng.uniform(0, 1), rng.uniform(0, 10)};
            run.record(std::abs(total_loss(c, w) - oracle::total_loss(c, w)));
        }
        out.push_back(run.finish());
    }
    return out;
}

/// An instance is admitted only if every analytic coordinate is at least this fraction of
/// max(1, |f|). Below it, central differences at step 1e-5 sit on the round-off floor
/// (about 1e-11·|f|) and neither the relative-error metric nor a 1% fault is resolvable.
inline constexpr double kConditionFloor = 1e-4;
inline constexpr std::size_t kMaxRedraws = 200;

struct GradientSuiteResult {
    std::vector<GradCheckReport> reports;
    std::size_t fault_trials = 0;
    std::size_t faults_detected = 0;
    std::size_t redraws = 0;

    bool passed() const {
        for (const auto& r : reports)
            if (!r.passed) return false;
        return fault_trials > 0 && faults_detected == fault_trials;
    }
};

namespace detail {

using Objective = std::function<double(const Tensor&)>;

struct GradientCase {
    std::string name;
    Objective f;
    Tensor point;
    Tensor analytic;
};

inline bool well_conditioned(const GradientCase& c) {
    const double floor = kConditionFloor * std::max(1.0, std::abs(c.f(c.point)));
    for (double a : c.analytic.data())
        if (!(std::abs(a) >= floor)) return false;
    return true;
}

/**
 * Draws instances from `draw` until all of its cases are well conditioned, then checks
 * each against central differences and re-checks with one random coordinate scaled by
 * 1% to confirm the fault is caught. Throws if no admissible instance turns up.
 */
inline void check_instance(GradientSuiteResult& result, Rng& rng,
                           const std::function<std::vector<GradientCase>()>& draw) {
    for (std::size_t attempt = 0; attempt <= kMaxRedraws; ++attempt) {
        const auto cases = draw();
        if (!std::all_of(cases.begin(), cases.end(), well_conditioned)) {
            ++result.redraws;
            continue;
        }
        for (const auto& c : cases) {
            result.reports.push_back(grad_check(c.name, c.f, c.point, c.analytic, kGradStep, kGradTolerance));
            Tensor corrupted = c.analytic;
            corrupted[rng.index(0, corrupted.size() - 1)] *= kFaultScale;
            ++result.fault_trials;
            if (!grad_check(c.name, c.f, c.point, corrupted, kGradStep, kGradTolerance).passed) ++result.faults_detected;
        }
        return;
    }
    throw std::runtime_error("gradient suite: no well-conditioned instance in " + std::to_string(kMaxRedraws) +
                             " draws");
}

/// Wraps a scalar-parameter objective as a function of a 1-element tensor.
inline Objective scalar_arg(std::function<double(double)> f) {
    return [f = std::move(f)](const Tensor& t) { return f(t[0]); };
}

}  // namespace detail

/**
 * Hand-derived gradients against central differences. Each operator objective is the
 * inner product of its output with a fixed random tensor; losses are checked directly
 * as functions of the predicted noise. `instances` random problems are drawn per group.
 */
inline GradientSuiteResult run_gradient_suite(const SuiteOptions& opt, std::size_t instances = 2) {
    using detail::GradientCase;
    Rng rng(opt.seed ^ 0x9e3779b97f4a7c15ull);
    GradientSuiteResult result;

    for (std::size_t inst = 0; inst < instances; ++inst) {
        // Strip operator: GAP -> linear -> sigmoid -> integration.
        detail::check_instance(result, rng, [&]() -> std::vector<GradientCase> {
            const std::size_t c = 3, k = inst % 2 ? 5 : 3;
            const Direction dir = inst % 2 ? Direction::Vertical : Direction::Horizontal;
            const Tensor x = rng.tensor({c, 5, 6});
            const auto p = random_strip_params(rng, dir, k, c);
            const Tensor g = rng.tensor(x.shape());
            const auto grads = strip_operator_backward(x, p, g);
            return {
                {"strip_operator.input", [=](const Tensor& v) { return dot(g, strip_operator(v, p)); }, x, grads.input},
                {"strip_operator.weight",
                 [=](const Tensor& v) {
                     StripParams q = p;
                     q.weight = v;
                     return dot(g, strip_operator(x, q));
                 },
                 p.weight, grads.weight},
                {"strip_operator.bias",
                 [=](const Tensor& v) {
                     StripParams q = p;
                     q.bias = v;
                     return dot(g, strip_operator(x, q));
                 },
                 p.bias, grads.bias},
            };
        });
        // Full STDA composition.
        detail::check_instance(result, rng, [&]() -> std::vector<GradientCase> {
            const std::size_t c = 2, k = 3;
            const Tensor x = rng.tensor({c, 5, 5});
            const auto p = random_stda_params(rng, k, c);
            const Tensor g = rng.tensor(x.shape());
            const auto grads = stda_backward(x, p, g);
            return {
                {"stda.input", [=](const Tensor& v) { return dot(g, stda(v, p)); }, x, grads.input},
                {"stda.horizontal.weight",
                 [=](const Tensor& v) {
                     StdaParams q = p;
                     q.horizontal.weight = v;
                     return dot(g, stda(x, q));
                 },
                 p.horizontal.weight, grads.horizontal.weight},
                {"stda.vertical.weight",
                 [=](const Tensor& v) {
                     StdaParams q = p;
                     q.vertical.weight = v;
                     return dot(g, stda(x, q));
                 },
                 p.vertical.weight, grads.vertical.weight},
            };
        });
        // Chain message passing, Tanh.
        detail::check_instance(result, rng, [&]() -> std::vector<GradientCase> {
            const std::size_t c = 3;
            const auto graph = ChainGraph::over(rng.tensor({2, 5, c}));
            const auto p = random_gnn_params(rng, c, inst + 1, Activation::Tanh);
            const Tensor g = rng.tensor(graph.nodes.shape());
            const auto grads = gnn_forward_backward(graph, p, g);
            return {
                {"gnn_forward.nodes", [=](const Tensor& v) { return dot(g, gnn_forward({v, graph.edges}, p)); },
                 graph.nodes, grads.nodes},
                {"gnn_forward.w_self",
                 [=](const Tensor& v) {
                     GnnLayerParams q = p;
                     q.w_self = v;
                     return dot(g, gnn_forward(graph, q));
                 },
                 p.w_self, grads.w_self},
                {"gnn_forward.w_nbr",
                 [=](const Tensor& v) {
                     GnnLayerParams q = p;
                     q.w_nbr = v;
                     return dot(g, gnn_forward(graph, q));
                 },
                 p.w_nbr, grads.w_nbr},
                {"gnn_forward.bias",
                 [=](const Tensor& v) {
                     GnnLayerParams q = p;
                     q.bias = v;
                     return dot(g, gnn_forward(graph, q));
                 },
                 p.bias, grads.bias},
            };
        });
        // Condition fusion.
        detail::check_instance(result, rng, [&]() -> std::vector<GradientCase> {
            const std::size_t da = 4, dt = 5;
            const auto s = random_sample(rng, "g", da, dt, 3);
            const auto p = random_fusion_params(rng, da, dt);
            const Tensor g = rng.tensor({da});
            const auto grads = fuse_backward(s, p, g);
            return {
                {"fuse.lambda", detail::scalar_arg([=](double v) {
                     FusionParams q = p;
                     q.lambda = v;
                     return dot(g, fuse(s, q));
                 }),
                 Tensor::vector({p.lambda}), Tensor::vector({grads.lambda})},
                {"fuse.w",
                 [=](const Tensor& v) {
                     FusionParams q = p;
                     q.w = v;
                     return dot(g, fuse(s, q));
                 },
                 p.w, grads.w},
                {"fuse.b",
                 [=](const Tensor& v) {
                     FusionParams q = p;
                     q.b = v;
                     return dot(g, fuse(s, q));
                 },
                 p.b, grads.b},
                {"fuse.audio",
                 [=](const Tensor& v) {
                     ConditionedSample t = s;
                     t.audio_feature = v;
                     return dot(g, fuse(t, p));
                 },
                 s.audio_feature, grads.audio_feature},
                {"fuse.text",
                 [=](const Tensor& v) {
                     ConditionedSample t = s;
                     t.text_tokens = v;
                     return dot(g, fuse(t, p));
                 },
                 s.text_tokens, grads.text_tokens},
            };
        });
        // Losses as functions of the predicted noise, through the one-step estimate.
        const auto fx = std::make_shared<const detail::LossFixture>(1, 2, 2, 3, opt.seed + inst);
        detail::check_instance(result, rng, [&]() -> std::vector<GradientCase> {
            const auto schedule = DiffusionSchedule::linear(50);
            const double ab = schedule.alpha_bar(rng.index(0, schedule.steps() - 1));
            const Tensor z0 = rng.tensor(fx->clip_shape());
            const Tensor eps = rng.tensor(fx->clip_shape());
            const Tensor eps_pred = rng.tensor(fx->clip_shape());
            const Tensor audio = rng.tensor({kClipFrames, fx->audio_dim});
            const Tensor z_t = add_noise(z0, eps, ab);
            const std::vector<std::size_t> layers{0, 1};
            const LossWeights weights;
            const Shape frame = fx->frame_shape();
            const Tensor z0_frame = slice_leading(z0, 0, 1).reshaped(frame);

            const auto estimate = [=](const Tensor& e) { return estimate_clean_latent(z_t, e, ab); };
            const auto sync_of = [=](const Tensor& e) { return sync_loss({0, estimate(e), audio}, fx->scorer); };
            const auto lpips_of = [=](const Tensor& e) {
                return lpips_loss(slice_leading(estimate(e), 0, 1).reshaped(frame), z0_frame, fx->perceptual, layers);
            };
            const auto trepa_of = [=](const Tensor& e) { return trepa_loss(estimate(e), z0, fx->video_encoder); };
            const auto noise_of = [=](const Tensor& e) { return noise_loss(eps, e); };

            const Tensor z0_hat = estimate(eps_pred);
            const Tensor g_noise = noise_loss_gradient(eps, eps_pred);
            const Tensor g_sync = clean_latent_vjp(fx->scorer.video_gradient(z0_hat, audio), ab);
            const Tensor g_trepa = clean_latent_vjp(trepa_loss_gradient(z0_hat, z0, fx->video_encoder), ab);
            Tensor g_lpips_frames(fx->clip_shape());
            const Tensor gf =
                lpips_loss_gradient(slice_leading(z0_hat, 0, 1).reshaped(frame), z0_frame, fx->perceptual, layers);
            std::copy(gf.data().begin(), gf.data().end(), g_lpips_frames.data().begin());
            const Tensor g_lpips = clean_latent_vjp(g_lpips_frames, ab);

            Tensor g_total = scale(g_noise, weights.noise);
            g_total = axpy(g_total, weights.sync, g_sync);
            g_total = axpy(g_total, weights.lpips, g_lpips);
            g_total = axpy(g_total, weights.trepa, g_trepa);

            // The perceptual term reads one frame, so check it on that frame alone.
            const Tensor zt_frame = slice_leading(z_t, 0, 1).reshaped(frame);
            const Tensor e_frame = slice_leading(eps_pred, 0, 1).reshaped(frame);
            const Tensor g_lpips_frame = clean_latent_vjp(
                lpips_loss_gradient(estimate_clean_latent(zt_frame, e_frame, ab), z0_frame, fx->perceptual, layers), ab);

            return {
                {"sync.video", [=](const Tensor& v) { return fx->scorer.score(v, audio); }, z0_hat,
                 fx->scorer.video_gradient(z0_hat, audio)},
                {"loss.noise", noise_of, eps_pred, g_noise},
                {"loss.sync", sync_of, eps_pred, g_sync},
                {"loss.lpips",
                 [=](const Tensor& e) {
                     return lpips_loss(estimate_clean_latent(zt_frame, e, ab), z0_frame, fx->perceptual, layers);
                 },
                 e_frame, g_lpips_frame},
                {"loss.trepa", trepa_of, eps_pred, g_trepa},
                {"loss.total",
                 [=](const Tensor& e) {
                     return total_loss({noise_of(e), sync_of(e), lpips_of(e), trepa_of(e)}, weights);
                 },
                 eps_pred, g_total},
            };
        });
    }

    // Keep the worst report per operator so the output has one line each.
    std::vector<GradCheckReport> worst;
    for (auto& r : result.reports) {
        auto it = std::find_if(worst.begin(), worst.end(), [&](const auto& w) { return w.op_name == r.op_name; });
        if (it == worst.end()) {
            worst.push_back(r);
        } else if ((!r.passed && it->passed) || (r.passed == it->passed && r.max_rel_error > it->max_rel_error)) {
            *it = r;
        }
    }
    result.reports = std::move(worst);
    return result;
}

struct ImpulseReport {
    std::size_t k = 0;
    std::size_t impulses = 0;
    double max_abs_diff = 0.0;    // interior window vs reflected kernel, and every response vs 2-D correlation
    std::size_t support_violations = 0;
    bool passed = false;
};

/**
 * Impulse probes of frozen-weight STDA with strictly positive taps. For every interior
 * impulse the nonzero set must be exactly the K×K window around it, with values equal
 * to the effective kernel reflected through the center. Every impulse, border ones
 * included, must also match zero-padded 2-D correlation with the kernel.
 */
inline ImpulseReport run_impulse_check(Rng& rng, std::size_t k, std::size_t channels = 2) {
    const std::size_t side = k + 6;
    const Tensor a_h = random_taps(rng, k), a_v = random_taps(rng, k);
    const Tensor kernel = effective_kernel(a_h, a_v);
    const Shape shape{channels, side, side};
    const auto op = [&](const Tensor& x) { return stda_frozen(x, a_h, a_v); };
    const long r = static_cast<long>(k / 2);

    ImpulseReport rep;
    rep.k = k;
    for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t h0 = 0; h0 < side; ++h0)
            for (std::size_t w0 = 0; w0 < side; ++w0) {
                const Tensor resp = impulse_response(op, c, h0, w0, shape);
                Tensor impulse(shape);
                impulse.at(c, h0, w0) = 1.0;
                rep.max_abs_diff = std::max(rep.max_abs_diff, max_abs_diff(resp, oracle::correlate2d(impulse, kernel)));
                ++rep.impulses;

                const bool interior = h0 >= k / 2 && w0 >= k / 2 && h0 + k / 2 < side && w0 + k / 2 < side;
                if (!interior) continue;
                for (std::size_t cc = 0; cc < channels; ++cc)
                    for (std::size_t h = 0; h < side; ++h)
                        for (std::size_t w = 0; w < side; ++w) {
                            const long dh = static_cast<long>(h0) - static_cast<long>(h);
                            const long dw = static_cast<long>(w0) - static_cast<long>(w);
                            const bool inside = cc == c && std::abs(dh) <= r && std::abs(dw) <= r;
                            const double v = resp.at(cc, h, w);
                            if (!inside) {
                                if (v != 0.0) ++rep.support_violations;
                                continue;
                            }
                            if (v == 0.0) ++rep.support_violations;
                            const double expect = kernel.at(static_cast<std::size_t>(dh + r), static_cast<std::size_t>(dw + r));
                            rep.max_abs_diff = std::max(rep.max_abs_diff, std::abs(v - expect));
                        }
            }
    rep.passed = rep.support_violations == 0 && rep.max_abs_diff < kOracleTolerance;
    return rep;
}

inline std::string format_report(const ImpulseReport& r) {
    return "impulse K=" + std::to_string(r.k) + " impulses=" + std::to_string(r.impulses) +
           " max_abs_diff=" + format_double(r.max_abs_diff) +
           " support_violations=" + std::to_string(r.support_violations) + (r.passed ? " PASS" : " FAIL");
}

struct ChainReport {
    std::size_t layers = 0;
    std::size_t frames = 0;
    std::size_t perturbed = 0;
    std::vector<double> influence;
    bool passed = false;
};

/// Frames within `layers` hops of the perturbed one must change; all others must be bit-identical.
inline ChainReport run_chain_check(Rng& rng, std::size_t frames, std::size_t layers, std::size_t perturbed) {
    const std::size_t c = 3;
    const ChainInstance inst{rng.tensor({2, c, frames, 3, 3}), random_gnn_params(rng, c, layers, Activation::Tanh)};
    ChainReport rep{layers, frames, perturbed, chain_influence_probe(inst, perturbed, layers), true};
    for (std::size_t t = 0; t < frames; ++t) {
        const std::size_t dist = t > perturbed ? t - perturbed : perturbed - t;
        const bool moved = rep.influence[t] != 0.0;
        if (moved != (dist <= layers)) rep.passed = false;
    }
    return rep;
}

inline std::string format_report(const ChainReport& r) {
    std::string changed;
    for (std::size_t t = 0; t < r.influence.size(); ++t)
        if (r.influence[t] != 0.0) changed += (changed.empty() ? "" : ",") + std::to_string(t);
    return "chain layers=" + std::to_string(r.layers) + " frames=" + std::to_string(r.frames) +
           " perturbed=" + std::to_string(r.perturbed) + " changed={" + changed + "}" + (r.passed ? " PASS" : " FAIL");
}

/// Runs every suite, writes one line per check plus one per suite; true iff all pass.
inline bool run_all_suites(const SuiteOptions& opt, std::ostream& os) {
    bool all = true;
    const auto suite_line = [&](const char* name, bool ok) {
        os << "suite " << name << (ok ? " PASS" : " FAIL") << '\n';
        all = all && ok;
    };

    bool ok = true;
    for (const auto& r : run_oracle_suite(opt)) {
        os << format_report(r) << '\n';
        ok = ok && r.passed;
    }
    suite_line("oracle", ok);

    const auto grads = run_gradient_suite(opt);
    for (const auto& r : grads.reports) os << format_report(r) << '\n';
    os << "gradcheck fault_injection detected=" << grads.faults_detected << "/" << grads.fault_trials
       << " redraws=" << grads.redraws << (grads.faults_detected == grads.fault_trials ? " PASS" : " FAIL") << '\n';
    suite_line("gradient", grads.passed());

    Rng rng(opt.seed + 17);
    ok = true;
    for (std::size_t k : {1, 3, 5, 7}) {
        const auto r = run_impulse_check(rng, k);
        os << format_report(r) << '\n';
        ok = ok && r.passed;
    }
    suite_line("impulse", ok);

    ok = true;
    for (std::size_t layers : {0, 1, 2, 3}) {
        const auto r = run_chain_check(rng, 9, layers, 4);
        os << format_report(r) << '\n';
        ok = ok && r.passed;
    }
    suite_line("chain", ok);
    return all;
}

}  // namespace striplab::verify
