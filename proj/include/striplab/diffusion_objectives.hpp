#pragma once

// Training objectives for a latent video diffusion model: noise prediction, one-step
// clean-latent estimation, windowed sync, layer-feature perceptual loss, temporal
// representation alignment, and their weighted total. Networks (decoder, sync scorer,
// perceptual and video encoders) are opaque deterministic maps behind small interfaces.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "striplab/tensor.hpp"

namespace striplab {

/// Frames per sync / alignment window.
inline constexpr std::size_t kClipFrames = 16;

/// Cumulative noise schedule ᾱ_t, values in (0, 1], non-increasing in t.
class DiffusionSchedule {
public:
    explicit DiffusionSchedule(Tensor alpha_bar) : alpha_bar_(std::move(alpha_bar)) {
        require_rank(alpha_bar_, 1, "DiffusionSchedule");
        for (std::size_t t = 0; t < alpha_bar_.size(); ++t) {
            const double a = alpha_bar_[t];
            if (!(a > 0.0 && a <= 1.0)) {
                throw std::invalid_argument("schedule: alpha_bar[" + std::to_string(t) + "] outside (0, 1]");
            }
            if (t > 0 && a > alpha_bar_[t - 1]) {
                throw std::invalid_argument("schedule: alpha_bar increases at t=" + std::to_string(t));
            }
        }
    }

    /// ᾱ_t = Π_{s≤t} (1 - β_s) with β linearly spaced in [beta_start, beta_end].
    static DiffusionSchedule linear(std::size_t steps, double beta_start = 1e-4, double beta_end = 2e-2) {
        if (steps == 0) throw std::invalid_argument("schedule: steps must be positive");
        Tensor a({steps});
        double prod = 1.0;
        for (std::size_t t = 0; t < steps; ++t) {
            const double frac = steps == 1 ? 0.0 : static_cast<double>(t) / static_cast<double>(steps - 1);
            prod *= 1.0 - (beta_start + frac * (beta_end - beta_start));
            a[t] = prod;
        }
        return DiffusionSchedule(std::move(a));
    }

    std::size_t steps() const noexcept { return alpha_bar_.size(); }
    double alpha_bar(std::size_t t) const {
        if (t >= steps()) throw std::out_of_range("schedule: timestep " + std::to_string(t) + " out of range");
        return alpha_bar_[t];
    }
    const Tensor& values() const noexcept { return alpha_bar_; }

private:
    Tensor alpha_bar_;
};

struct LossWeights {
    double noise = 1.0;
    double sync = 0.05;
    double lpips = 0.1;
    double trepa = 10.0;

    void validate() const {
        for (double w : {noise, sync, lpips, trepa})
            if (!(std::isfinite(w) && w >= 0.0)) throw std::invalid_argument("loss weights must be finite and >= 0");
    }
};

struct LossComponents {
    double noise = 0.0;
    double sync = 0.0;
    double lpips = 0.0;
    double trepa = 0.0;
};

inline double mean_squared_error(const Tensor& a, const Tensor& b, const char* op) {
    require_same_shape(a, b, op);
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s / static_cast<double>(a.size());
}

/// Mean squared error between sampled and predicted noise.
inline double noise_loss(const Tensor& eps_true, const Tensor& eps_pred) {
    return mean_squared_error(eps_true, eps_pred, "noise_loss");
}

inline void require_alpha_bar(double alpha_bar) {
    if (!(alpha_bar > 0.0 && alpha_bar <= 1.0)) {
        throw std::domain_error("alpha_bar must lie in (0, 1], got " + std::to_string(alpha_bar));
    }
}

/// Forward noising z_t = √ᾱ·z₀ + √(1-ᾱ)·ε.
inline Tensor add_noise(const Tensor& z0, const Tensor& eps, double alpha_bar) {
    require_alpha_bar(alpha_bar);
    require_same_shape(z0, eps, "add_noise");
    const double a = std::sqrt(alpha_bar), s = std::sqrt(1.0 - alpha_bar);
    Tensor out(z0.shape());
    for (std::size_t i = 0; i < z0.size(); ++i) out[i] = a * z0[i] + s * eps[i];
    return out;
}

/// ẑ₀ = (z_t − √(1−ᾱ_t)·ε_pred) / √ᾱ_t
inline Tensor estimate_clean_latent(const Tensor& z_t, const Tensor& eps_pred, double alpha_bar) {
    require_alpha_bar(alpha_bar);
    require_same_shape(z_t, eps_pred, "estimate_clean_latent");
    const double s = std::sqrt(1.0 - alpha_bar), inv = 1.0 / std::sqrt(alpha_bar);
    Tensor out(z_t.shape());
    for (std::size_t i = 0; i < z_t.size(); ++i) out[i] = (z_t[i] - s * eps_pred[i]) * inv;
    return out;
}

/// Gradient w.r.t. ε_pred given the gradient w.r.t. ẑ₀.
inline Tensor clean_latent_vjp(const Tensor& grad_z0, double alpha_bar) {
    require_alpha_bar(alpha_bar);
    return scale(grad_z0, -std::sqrt(1.0 - alpha_bar) / std::sqrt(alpha_bar));
}

/// Deterministic feature map. vjp() is optional and only needed for gradient checks.
class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;
    virtual Tensor extract(const Tensor& x) const = 0;
    /// Gradient w.r.t. x of <grad, extract(x)>.
    virtual Tensor vjp(const Tensor& x, const Tensor& grad) const {
        (void)x;
        (void)grad;
        throw std::logic_error("feature extractor is not differentiable");
    }
};

/// Extractor exposing intermediate layers; extract() returns the last one.
class LayeredFeatureExtractor : public FeatureExtractor {
public:
    virtual std::size_t num_layers() const = 0;
    virtual Tensor layer(const Tensor& x, std::size_t l) const = 0;
    virtual Tensor layer_vjp(const Tensor& x, std::size_t l, const Tensor& grad) const {
        (void)x;
        (void)l;
        (void)grad;
        throw std::logic_error("feature extractor is not differentiable");
    }

    Tensor extract(const Tensor& x) const override { return layer(x, num_layers() - 1); }
    Tensor vjp(const Tensor& x, const Tensor& grad) const override { return layer_vjp(x, num_layers() - 1, grad); }
};

class IdentityExtractor final : public LayeredFeatureExtractor {
public:
    std::size_t num_layers() const override { return 1; }
    Tensor layer(const Tensor& x, std::size_t) const override { return x; }
    Tensor layer_vjp(const Tensor&, std::size_t, const Tensor& grad) const override { return grad; }
};

/// Mean of each slice along axis 0: F×... -> F.
class FramewiseMeanExtractor final : public FeatureExtractor {
public:
    Tensor extract(const Tensor& x) const override {
        const std::size_t frames = x.extent(0), per = x.size() / frames;
        Tensor out({frames});
        for (std::size_t f = 0; f < frames; ++f) {
            double s = 0.0;
            for (std::size_t i = 0; i < per; ++i) s += x[f * per + i];
            out[f] = s / static_cast<double>(per);
        }
        return out;
    }
    Tensor vjp(const Tensor& x, const Tensor& grad) const override {
        const std::size_t frames = x.extent(0), per = x.size() / frames;
        Tensor out(x.shape());
        for (std::size_t f = 0; f < frames; ++f)
            for (std::size_t i = 0; i < per; ++i) out[f * per + i] = grad[f] / static_cast<double>(per);
        return out;
    }
};

/**
 * Frozen random linear layers on the flattened input. Layer l is M_l···M_0·vec(x), with
 * M_l entries drawn N(0, 1/fan_in) from a seeded generator.
 */
class FixedLinearExtractor final : public LayeredFeatureExtractor {
public:
    FixedLinearExtractor(std::size_t input_size, std::vector<std::size_t> layer_dims, std::uint64_t seed)
        : input_size_(input_size) {
        if (input_size == 0 || layer_dims.empty()) throw std::invalid_argument("FixedLinearExtractor: empty config");
        std::mt19937_64 gen(seed);
        std::size_t fan_in = input_size;
        for (std::size_t dim : layer_dims) {
            std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(fan_in)));
            Tensor m({dim, fan_in});
            for (auto& v : m.data()) v = dist(gen);
            layers_.push_back(std::move(m));
            fan_in = dim;
        }
    }

    std::size_t input_size() const noexcept { return input_size_; }
    std::size_t num_layers() const override { return layers_.size(); }
    const Tensor& matrix(std::size_t l) const { return layers_.at(l); }

    Tensor layer(const Tensor& x, std::size_t l) const override {
        check(x, l);
        Tensor h = x.reshaped({x.size(), 1});
        for (std::size_t i = 0; i <= l; ++i) h = matmul(layers_[i], h);
        return h.reshaped({h.size()});
    }

    Tensor layer_vjp(const Tensor& x, std::size_t l, const Tensor& grad) const override {
        check(x, l);
        Tensor g = grad.reshaped({1, grad.size()});
        for (std::size_t i = l + 1; i-- > 0;) g = matmul(g, layers_[i]);
        return g.reshaped(x.shape());
    }

private:
    void check(const Tensor& x, std::size_t l) const {
        if (x.size() != input_size_) {
            throw ShapeError("FixedLinearExtractor: input " + shape_string(x.shape()) + " expected " +
                             std::to_string(input_size_) + " elements");
        }
        if (l >= layers_.size()) throw std::out_of_range("FixedLinearExtractor: layer index out of range");
    }

    std::size_t input_size_;
    std::vector<Tensor> layers_;
};

/// Scores a (decoded video window, audio window) pair; lower is better.
class SyncScorer {
public:
    virtual ~SyncScorer() = default;
    virtual double score(const Tensor& video, const Tensor& audio) const = 0;
    /// Gradient of score() w.r.t. the video window.
    virtual Tensor video_gradient(const Tensor& video, const Tensor& audio) const {
        (void)video;
        (void)audio;
        throw std::logic_error("sync scorer is not differentiable");
    }
};

/// 1 − cos(E_v(video), E_a(audio)).
class CosineSyncScorer final : public SyncScorer {
public:
    CosineSyncScorer(const FeatureExtractor& video_encoder, const FeatureExtractor& audio_encoder)
        : video_(video_encoder), audio_(audio_encoder) {}

    double score(const Tensor& video, const Tensor& audio) const override {
        return 1.0 - cosine_similarity(video_.extract(video), audio_.extract(audio));
    }

    Tensor video_gradient(const Tensor& video, const Tensor& audio) const override {
        const Tensor u = video_.extract(video);
        const Tensor v = audio_.extract(audio);
        const double nu = l2_norm(u), nv = l2_norm(v);
        const double cos = cosine_similarity(u, v);
        Tensor g(u.shape());
        for (std::size_t i = 0; i < u.size(); ++i) g[i] = -(v[i] / (nu * nv) - cos * u[i] / (nu * nu));
        return video_.vjp(video, g);
    }

private:
    const FeatureExtractor& video_;
    const FeatureExtractor& audio_;
};

struct ClipWindow {
    std::size_t start = 0;
    Tensor video;  // 16×C×H×W
    Tensor audio;  // 16×d
};

/// Raised when a clip is shorter than one window.
class ClipTooShortError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Windows of 16 frames at f = 0, stride, 2·stride, ... with f + 16 <= F.
inline std::vector<ClipWindow> sliding_windows(const Tensor& video, const Tensor& audio, std::size_t stride = 1) {
    if (stride == 0) throw std::invalid_argument("sliding_windows: stride must be positive");
    require_rank(audio, 2, "sliding_windows");
    const std::size_t frames = video.extent(0);
    if (audio.extent(0) != frames) {
        throw ShapeError("sliding_windows: video has " + std::to_string(frames) + " frames, audio " +
                         std::to_string(audio.extent(0)));
    }
    if (frames < kClipFrames) {
        throw ClipTooShortError("sliding_windows: clip of " + std::to_string(frames) + " frames is shorter than " +
                                std::to_string(kClipFrames));
    }
    std::vector<ClipWindow> out;
    for (std::size_t f = 0; f + kClipFrames <= frames; f += stride) {
        out.push_back({f, slice_leading(video, f, kClipFrames), slice_leading(audio, f, kClipFrames)});
    }
    return out;
}

class ScorerError : public std::runtime_error {
public:
    ScorerError(std::size_t window, const std::string& what)
        : std::runtime_error("sync scorer failed on window starting at frame " + std::to_string(window) + ": " +
                             what),
          window_(window) {}
    std::size_t window() const noexcept { return window_; }

private:
    std::size_t window_;
};

inline void require_clip(const Tensor& t, const char* op) {
    if (t.extent(0) != kClipFrames) {
        throw ShapeError(std::string(op) + ": expected " + std::to_string(kClipFrames) + " frames, got " +
                         shape_string(t.shape()));
    }
}

/// Sync score of one decoded window. Averaging over windows and timesteps is done by the caller.
inline double sync_loss(const ClipWindow& clip, const SyncScorer& scorer) {
    require_clip(clip.video, "sync_loss");
    require_clip(clip.audio, "sync_loss");
    try {
        return scorer.score(clip.video, clip.audio);
    } catch (const std::exception& e) {
        throw ScorerError(clip.start, e.what());
    }
}

/// Σ over the requested layers of the mean squared feature difference. Layers are
/// accumulated in ascending index order, so the result ignores the list's order.
inline double lpips_loss(const Tensor& x_hat, const Tensor& x, const LayeredFeatureExtractor& extractor,
                         std::span<const std::size_t> layers) {
    require_same_shape(x_hat, x, "lpips_loss");
    std::vector<std::size_t> order(layers.begin(), layers.end());
    std::sort(order.begin(), order.end());
    double total = 0.0;
    for (std::size_t l : order) {
        total += mean_squared_error(extractor.layer(x_hat, l), extractor.layer(x, l), "lpips_loss");
    }
    return total;
}

/// Mean squared distance between the video encoder's representations of two 16-frame clips.
inline double trepa_loss(const Tensor& clip_hat, const Tensor& clip, const FeatureExtractor& encoder) {
    require_same_shape(clip_hat, clip, "trepa_loss");
    require_clip(clip_hat, "trepa_loss");
    return mean_squared_error(encoder.extract(clip_hat), encoder.extract(clip), "trepa_loss");
}

inline double total_loss(const LossComponents& c, const LossWeights& w) {
    return w.noise * c.noise + w.sync * c.sync + w.lpips * c.lpips + w.trepa * c.trepa;
}

// Gradients of each loss w.r.t. its generated/predicted argument.

inline Tensor noise_loss_gradient(const Tensor& eps_true, const Tensor& eps_pred) {
    require_same_shape(eps_true, eps_pred, "noise_loss_gradient");
    return scale(sub(eps_pred, eps_true), 2.0 / static_cast<double>(eps_pred.size()));
}

inline Tensor lpips_loss_gradient(const Tensor& x_hat, const Tensor& x, const LayeredFeatureExtractor& extractor,
                                  std::span<const std::size_t> layers) {
    require_same_shape(x_hat, x, "lpips_loss_gradient");
    Tensor g(x_hat.shape());
    for (std::size_t l : layers) {
        const Tensor d = sub(extractor.layer(x_hat, l), extractor.layer(x, l));
        g = add(g, extractor.layer_vjp(x_hat, l, scale(d, 2.0 / static_cast<double>(d.size()))));
    }
    return g;
}

inline Tensor trepa_loss_gradient(const Tensor& clip_hat, const Tensor& clip, const FeatureExtractor& encoder) {
    require_same_shape(clip_hat, clip, "trepa_loss_gradient");
    const Tensor d = sub(encoder.extract(clip_hat), encoder.extract(clip));
    return encoder.vjp(clip_hat, scale(d, 2.0 / static_cast<double>(d.size())));
}

/// Everything needed to evaluate the objectives on one clip.
struct ObjectiveInputs {
    Tensor latent;      // clean clip z₀, F×C×H×W
    Tensor noise;       // sampled ε, same shape
    Tensor noise_pred;  // predicted ε, same shape
    Tensor audio;       // F×d
};

struct ObjectiveModels {
    /// Maps latents to image space; identity when null.
    const FeatureExtractor* decoder = nullptr;
    const SyncScorer* sync = nullptr;
    const LayeredFeatureExtractor* perceptual = nullptr;
    std::vector<std::size_t> perceptual_layers;
    const FeatureExtractor* video_encoder = nullptr;
};

struct LossBreakdown {
    LossComponents components;
    double total = 0.0;
    std::size_t timesteps = 0;
    std::size_t windows = 0;  // per timestep
};

/**
 * Averages every loss over the supplied timesteps and sliding windows. For each t the
 * clip is noised with the sampled ε and ẑ₀ is estimated from the predicted ε; the
 * perceptual loss compares the first frame of each window, sync and alignment compare
 * whole windows. Averages use pairwise summation.
 */
inline LossBreakdown evaluate_objectives(const ObjectiveInputs& in, const DiffusionSchedule& schedule,
                                         std::span<const std::size_t> timesteps, std::size_t stride,
                                         const ObjectiveModels& models, const LossWeights& weights) {
    weights.validate();
    if (!models.sync || !models.perceptual || !models.video_encoder) {
        throw std::invalid_argument("evaluate_objectives: sync scorer, perceptual extractor and video encoder required");
    }
    if (timesteps.empty()) throw std::invalid_argument("evaluate_objectives: no timesteps");
    require_same_shape(in.latent, in.noise, "evaluate_objectives");
    require_same_shape(in.latent, in.noise_pred, "evaluate_objectives");
    auto decode = [&](const Tensor& z) { return models.decoder ? models.decoder->extract(z) : z; };

    const Tensor real = decode(in.latent);
    const auto real_windows = sliding_windows(real, in.audio, stride);
    const double noise = noise_loss(in.noise, in.noise_pred);

    std::vector<double> sync, lpips, trepa;
    for (std::size_t t : timesteps) {
        const double ab = schedule.alpha_bar(t);
        const Tensor z0_hat = estimate_clean_latent(add_noise(in.latent, in.noise, ab), in.noise_pred, ab);
        const auto windows = sliding_windows(decode(z0_hat), in.audio, stride);
        for (std::size_t i = 0; i < windows.size(); ++i) {
            const auto& gen = windows[i];
            const auto& ref = real_windows[i];
            const Shape frame_shape(gen.video.shape().begin() + 1, gen.video.shape().end());
            sync.push_back(sync_loss(gen, *models.sync));
            lpips.push_back(lpips_loss(slice_leading(gen.video, 0, 1).reshaped(frame_shape),
                                       slice_leading(ref.video, 0, 1).reshaped(frame_shape), *models.perceptual,
                                       models.perceptual_layers));
            trepa.push_back(trepa_loss(gen.video, ref.video, *models.video_encoder));
        }
    }
    const auto mean = [](const std::vector<double>& v) { return pairwise_sum(v) / static_cast<double>(v.size()); };
    LossBreakdown r;
    r.components = {noise, mean(sync), mean(lpips), mean(trepa)};
    r.total = total_loss(r.components, weights);
    r.timesteps = timesteps.size();
    r.windows = real_windows.size();
    return r;
}

/// `loss.<name>=<value>` lines, values printed with round-trip precision.
inline std::string format_loss_report(const LossBreakdown& b) {
    std::string out;
    char buf[64];
    const auto line = [&](const char* name, double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out += std::string("loss.") + name + "=" + buf + "\n";
    };
    line("noise", b.components.noise);
    line("sync", b.components.sync);
    line("lpips", b.components.lpips);
    line("trepa", b.components.trepa);
    line("total", b.total);
    return out;
}

}  // namespace striplab
