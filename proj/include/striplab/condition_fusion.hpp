#pragma once

// Text-audio condition fusion and cosine-threshold filtering of training samples.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "striplab/tensor.hpp"
#include "striplab/tensor_io.hpp"

namespace striplab {

/// Default fusion weight for the projected text term.
inline constexpr double kDefaultFusionLambda = 0.3;
/// Default retention threshold on cosine similarity.
inline constexpr double kDefaultFilterTau = 0.8;

struct FusionParams {
    Tensor w;  // d_a×d_t
    Tensor b;  // d_a
    double lambda = kDefaultFusionLambda;

    std::size_t audio_dim() const { return w.extent(0); }
    std::size_t text_dim() const { return w.extent(1); }

    /// Identity projection with zero bias (requires d_a == d_t).
    static FusionParams identity(std::size_t dim, double lambda = kDefaultFusionLambda) {
        return {Tensor::identity(dim), Tensor({dim}), lambda};
    }
};

struct ConditionedSample {
    std::string id;
    Tensor audio_feature;      // d_a
    Tensor text_tokens;        // n_tok×d_t
    Tensor emotion_embedding;  // d_a
};

inline void validate_fusion(const ConditionedSample& s, const FusionParams& p) {
    if (!std::isfinite(p.lambda)) throw std::invalid_argument("fuse: lambda must be finite");
    if (p.w.rank() != 2 || p.b.rank() != 1 || p.b.extent(0) != p.w.extent(0)) {
        throw ShapeError("fuse: projection " + shape_string(p.w.shape()) + ", bias " + shape_string(p.b.shape()));
    }
    if (s.text_tokens.rank() != 2) {
        throw ShapeError("fuse: text tokens must be n_tok x d_t, got " + shape_string(s.text_tokens.shape()));
    }
    if (s.text_tokens.extent(1) != p.text_dim()) {
        throw ShapeError("fuse: text dim " + std::to_string(s.text_tokens.extent(1)) + " vs projection " +
                         shape_string(p.w.shape()));
    }
    if (s.audio_feature.rank() != 1 || s.audio_feature.extent(0) != p.audio_dim()) {
        throw ShapeError("fuse: audio feature " + shape_string(s.audio_feature.shape()) + " vs projection " +
                         shape_string(p.w.shape()));
    }
}

/// f_c = f_a + λ · mean_tokens(tokens·Wᵀ + b).
inline Tensor fuse(const ConditionedSample& s, const FusionParams& p) {
    validate_fusion(s, p);
    const Tensor projected = matmul(s.text_tokens, transpose(p.w));
    const std::size_t n = projected.extent(0), d = projected.extent(1);
    Tensor out = s.audio_feature;
    for (std::size_t j = 0; j < d; ++j) {
        double acc = 0.0;
        for (std::size_t t = 0; t < n; ++t) acc += projected[t * d + j];
        out[j] += p.lambda * (acc / static_cast<double>(n) + p.b[j]);
    }
    return out;
}

struct FusionGradients {
    Tensor audio_feature;
    Tensor text_tokens;
    Tensor w;
    Tensor b;
    double lambda = 0.0;
};

/// Gradients of <grad_out, fuse(s, p)>.
inline FusionGradients fuse_backward(const ConditionedSample& s, const FusionParams& p, const Tensor& grad_out) {
    validate_fusion(s, p);
    require_same_shape(s.audio_feature, grad_out, "fuse_backward");
    const std::size_t n = s.text_tokens.extent(0), dt = p.text_dim(), da = p.audio_dim();
    const double inv_n = 1.0 / static_cast<double>(n);

    Tensor mean_tokens({dt});
    for (std::size_t t = 0; t < n; ++t)
        for (std::size_t k = 0; k < dt; ++k) mean_tokens[k] += s.text_tokens[t * dt + k] * inv_n;
    // mean(tokens·Wᵀ + b) = W·mean_tokens + b
    Tensor text_term = p.b;
    for (std::size_t j = 0; j < da; ++j)
        for (std::size_t k = 0; k < dt; ++k) text_term[j] += p.w[j * dt + k] * mean_tokens[k];

    FusionGradients g{grad_out, Tensor(s.text_tokens.shape()), Tensor(p.w.shape()), scale(grad_out, p.lambda),
                      dot(grad_out, text_term)};
    for (std::size_t j = 0; j < da; ++j)
        for (std::size_t k = 0; k < dt; ++k) g.w[j * dt + k] = p.lambda * grad_out[j] * mean_tokens[k];
    Tensor per_token({dt});
    for (std::size_t k = 0; k < dt; ++k)
        for (std::size_t j = 0; j < da; ++j) per_token[k] += p.lambda * grad_out[j] * p.w[j * dt + k] * inv_n;
    for (std::size_t t = 0; t < n; ++t)
        for (std::size_t k = 0; k < dt; ++k) g.text_tokens[t * dt + k] = per_token[k];
    return g;
}

struct FilterResult {
    std::vector<std::string> retained;
    std::size_t rejected_below = 0;
    std::size_t rejected_degenerate = 0;
    /// One message per degenerate sample, in input order.
    std::vector<std::string> diagnostics;

    std::string summary() const {
        return "retained=" + std::to_string(retained.size()) + " rejected_below=" + std::to_string(rejected_below) +
               " rejected_degenerate=" + std::to_string(rejected_degenerate);
    }
};

/// Keeps samples with cosine(fuse(x), y_x) >= tau, in input order.
inline FilterResult filter_dataset(const std::vector<ConditionedSample>& samples, const FusionParams& p, double tau) {
    if (!(tau >= -1.0 && tau <= 1.0)) {
        throw std::invalid_argument("filter_dataset: tau must lie in [-1, 1], got " + std::to_string(tau));
    }
    FilterResult r;
    for (const auto& s : samples) {
        const Tensor fused = fuse(s, p);
        double sim = 0.0;
        try {
            sim = cosine_similarity(fused, s.emotion_embedding);
        } catch (const ZeroNormError&) {
            ++r.rejected_degenerate;
            r.diagnostics.push_back(s.id + ": zero-norm fused feature or emotion embedding");
            continue;
        }
        if (sim >= tau) {
            r.retained.push_back(s.id);
        } else {
            ++r.rejected_below;
        }
    }
    return r;
}

/// Malformed manifest content; the message carries the 1-based line number.
class ManifestError : public std::runtime_error {
public:
    ManifestError(std::size_t line, const std::string& what)
        : std::runtime_error("manifest line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/**
 * Reads a sample manifest: one JSON object per line with string fields
 * `id`, `audio`, `text`, `emotion`. The last three are TSR1 paths, resolved relative
 * to the manifest's directory. Blank lines and lines starting with '#' are skipped.
 */
inline std::vector<ConditionedSample> load_manifest(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw FormatError(path.string() + ": cannot open");
    const auto base = path.parent_path();
    std::vector<ConditionedSample> samples;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ManifestError(lineno, std::string("invalid JSON: ") + e.what());
        }
        if (!rec.is_object()) throw ManifestError(lineno, "record must be a JSON object");
        auto field = [&](const char* key) {
            if (!rec.contains(key) || !rec[key].is_string()) {
                throw ManifestError(lineno, std::string("missing string field '") + key + "'");
            }
            return rec[key].get<std::string>();
        };
        ConditionedSample s;
        s.id = field("id");
        const std::string audio = field("audio"), text = field("text"), emotion = field("emotion");
        try {
            s.audio_feature = load_tsr1(base / audio);
            s.text_tokens = load_tsr1(base / text);
            s.emotion_embedding = load_tsr1(base / emotion);
        } catch (const FormatError& e) {
            throw ManifestError(lineno, e.what());
        }
        if (s.text_tokens.rank() == 1) s.text_tokens = s.text_tokens.reshaped({1, s.text_tokens.size()});
        samples.push_back(std::move(s));
    }
    return samples;
}

}  // namespace striplab
