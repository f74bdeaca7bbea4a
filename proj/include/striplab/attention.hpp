#pragma once

// Global self-attention and directional strip attention over C×H×W feature maps.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <initializer_list>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "striplab/tensor.hpp"

namespace striplab {

struct SelfAttentionParams {
    Tensor w_q;
    Tensor w_k;
    Tensor w_v;
    /// Divide scores by sqrt(C). Off by default: scores are used unscaled.
    bool scale_by_sqrt_d = false;

    void validate(std::size_t channels) const {
        for (const Tensor* w : {&w_q, &w_k, &w_v}) {
            if (w->rank() != 2 || w->extent(0) != channels || w->extent(1) != channels) {
                throw ShapeError("self_attention: projection " + shape_string(w->shape()) + " for " +
                                 std::to_string(channels) + " channels");
            }
        }
    }
};

/// Flattens C×H×W into N=H·W tokens of dimension C (N×C).
inline Tensor to_tokens(const Tensor& x) {
    require_rank(x, 3, "to_tokens");
    return transpose(x.reshaped({x.extent(0), x.extent(1) * x.extent(2)}));
}

inline Tensor from_tokens(const Tensor& tokens, std::size_t h, std::size_t w) {
    return transpose(tokens).reshaped({tokens.extent(1), h, w});
}

/// Softmax(QKᵀ)V over the H·W spatial tokens, with Q = XW^Q, K = XW^K, V = XW^V.
inline Tensor self_attention(const Tensor& x, const SelfAttentionParams& p) {
    require_rank(x, 3, "self_attention");
    const std::size_t c = x.extent(0), h = x.extent(1), w = x.extent(2);
    p.validate(c);
    const Tensor tokens = to_tokens(x);
    const Tensor q = matmul(tokens, p.w_q);
    const Tensor k = matmul(tokens, p.w_k);
    const Tensor v = matmul(tokens, p.w_v);

    const std::size_t n = h * w;
    const double s = p.scale_by_sqrt_d ? 1.0 / std::sqrt(static_cast<double>(c)) : 1.0;
    Tensor scores({n, n});
    const double* Q = q.data().data();
    const double* K = k.data().data();
    double* S = scores.data().data();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t ch = 0; ch < c; ++ch) acc += Q[i * c + ch] * K[j * c + ch];
            S[i * n + j] = acc * s;
        }
    }
    return from_tokens(matmul(softmax_rows(scores), v), h, w);
}

enum class Direction { Horizontal, Vertical };

inline const char* to_string(Direction d) { return d == Direction::Horizontal ? "horizontal" : "vertical"; }

/**
 * Dynamic weight branch for one strip operator: a K×C linear map plus bias applied to
 * the spatially pooled channel vector, followed by a sigmoid. The resulting K weights
 * are shared over every channel and position.
 */
struct StripParams {
    Direction direction = Direction::Horizontal;
    Tensor weight;  // K×C
    Tensor bias;    // K

    std::size_t k() const { return weight.extent(0); }

    void validate(std::size_t channels) const {
        if (weight.rank() != 2 || bias.rank() != 1 || bias.extent(0) != weight.extent(0)) {
            throw ShapeError("strip params: weight " + shape_string(weight.shape()) + ", bias " +
                             shape_string(bias.shape()));
        }
        if (weight.extent(1) != channels) {
            throw ShapeError("strip params: weight expects " + std::to_string(weight.extent(1)) +
                             " channels, input has " + std::to_string(channels));
        }
        if (k() % 2 == 0) throw std::invalid_argument("strip length K must be odd, got " + std::to_string(k()));
    }
};

struct StdaParams {
    StripParams horizontal;
    StripParams vertical;

    void validate(std::size_t channels) const {
        if (horizontal.direction != Direction::Horizontal || vertical.direction != Direction::Vertical) {
            throw std::invalid_argument("stda: branch directions must be horizontal then vertical");
        }
        horizontal.validate(channels);
        vertical.validate(channels);
        if (horizontal.k() != vertical.k()) {
            throw std::invalid_argument("stda: horizontal and vertical strip lengths differ");
        }
    }
};

/// A = sigmoid(W·GAP(x) + b), one weight per strip tap.
inline Tensor strip_weights(const Tensor& x, const StripParams& p) {
    require_rank(x, 3, "strip_weights");
    p.validate(x.extent(0));
    const Tensor pooled = gap_spatial(x);
    const std::size_t k = p.k(), c = x.extent(0);
    Tensor a({k});
    for (std::size_t i = 0; i < k; ++i) {
        double z = p.bias[i];
        for (std::size_t ch = 0; ch < c; ++ch) z += p.weight[i * c + ch] * pooled[ch];
        a[i] = sigmoid(z);
    }
    return a;
}

/**
 * Strip integration along one axis:
 *   out[c,h,w] = Σ_k a[k] · x[c,h,w-⌊K/2⌋+k]   (horizontal; vertical indexes h)
 * Taps that fall outside the map read zero.
 */
inline Tensor strip_apply(const Tensor& x, const Tensor& a, Direction direction) {
    require_rank(x, 3, "strip_apply");
    require_rank(a, 1, "strip_apply");
    if (a.size() % 2 == 0) throw std::invalid_argument("strip_apply: strip length must be odd");
    const std::size_t channels = x.extent(0);
    const auto height = static_cast<std::ptrdiff_t>(x.extent(1));
    const auto width = static_cast<std::ptrdiff_t>(x.extent(2));
    const auto taps = static_cast<std::ptrdiff_t>(a.size());
    const std::ptrdiff_t half = taps / 2;

    Tensor out(x.shape());
    const double* in = x.data().data();
    double* dst = out.data().data();
    for (std::size_t ch = 0; ch < channels; ++ch) {
        const double* plane = in + ch * height * width;
        double* oplane = dst + ch * height * width;
        for (std::ptrdiff_t k = 0; k < taps; ++k) {
            const double ak = a[static_cast<std::size_t>(k)];
            const std::ptrdiff_t d = k - half;
            if (direction == Direction::Horizontal) {
                const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -d);
                const std::ptrdiff_t hi = std::min(width, width - d);
                for (std::ptrdiff_t row = 0; row < height; ++row) {
                    const double* src = plane + row * width;
                    double* o = oplane + row * width;
                    for (std::ptrdiff_t col = lo; col < hi; ++col) o[col] += ak * src[col + d];
                }
            } else {
                const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -d);
                const std::ptrdiff_t hi = std::min(height, height - d);
                for (std::ptrdiff_t row = lo; row < hi; ++row) {
                    const double* src = plane + (row + d) * width;
                    double* o = oplane + row * width;
                    for (std::ptrdiff_t col = 0; col < width; ++col) o[col] += ak * src[col];
                }
            }
        }
    }
    return out;
}

/// Full strip operator S_K: weights generated from x, then integration along p.direction.
inline Tensor strip_operator(const Tensor& x, const StripParams& p) {
    return strip_apply(x, strip_weights(x, p), p.direction);
}

struct StdaTrace {
    Tensor output;
    Tensor intermediate;  // after the horizontal operator
    Tensor a_h;
    Tensor a_v;
};

/// STDA_K(x) = S_K^V(S_K^H(x)). Vertical weights are generated from the horizontal output.
inline StdaTrace stda_traced(const Tensor& x, const StdaParams& p) {
    require_rank(x, 3, "stda");
    p.validate(x.extent(0));
    StdaTrace t;
    t.a_h = strip_weights(x, p.horizontal);
    t.intermediate = strip_apply(x, t.a_h, Direction::Horizontal);
    t.a_v = strip_weights(t.intermediate, p.vertical);
    t.output = strip_apply(t.intermediate, t.a_v, Direction::Vertical);
    return t;
}

inline Tensor stda(const Tensor& x, const StdaParams& p) { return stda_traced(x, p).output; }

/// STDA with weights held fixed; a linear map of x.
inline Tensor stda_frozen(const Tensor& x, const Tensor& a_h, const Tensor& a_v) {
    return strip_apply(strip_apply(x, a_h, Direction::Horizontal), a_v, Direction::Vertical);
}

enum class Execution { Serial, Parallel };

/// Applies STDA independently to each frame. Parallel execution partitions frames
/// across threads; every frame is computed by the same code path, so results are
/// bit-identical to serial execution.
inline std::vector<Tensor> stda_frames(std::span<const Tensor> frames, const StdaParams& p,
                                       Execution exec = Execution::Serial, unsigned threads = 0) {
    std::vector<Tensor> out(frames.size());
    if (exec == Execution::Serial || frames.size() < 2) {
        for (std::size_t i = 0; i < frames.size(); ++i) out[i] = stda(frames[i], p);
        return out;
    }
    if (threads == 0) threads = std::max(2u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, frames.size()));
    std::vector<std::exception_ptr> errors(threads);
    {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t) {
            pool.emplace_back([&, t] {
                try {
                    for (std::size_t i = t; i < frames.size(); i += threads) out[i] = stda(frames[i], p);
                } catch (...) {
                    errors[t] = std::current_exception();
                }
            });
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

/**
 * Rank-1 K×K kernel realized by frozen-weight STDA: kernel[i][j] = a_v[i]·a_h[j].
 * Indexed as a correlation kernel, so stda_frozen(x)[h,w] = Σ_ij kernel[i][j]·x[h-r+i, w-r+j].
 */
inline Tensor effective_kernel(const Tensor& a_h, const Tensor& a_v) {
    require_rank(a_h, 1, "effective_kernel");
    require_rank(a_v, 1, "effective_kernel");
    if (a_h.size() != a_v.size()) throw ShapeError("effective_kernel: strip lengths differ");
    const std::size_t k = a_h.size();
    Tensor out({k, k});
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) out[i * k + j] = a_v[i] * a_h[j];
    return out;
}

// Backward passes. Each takes the gradient of a scalar objective with respect to the
// operator output and returns gradients with respect to the inputs and parameters.

/// Adjoint of strip_apply in x: correlation with the reversed taps.
inline Tensor strip_apply_adjoint(const Tensor& grad_out, const Tensor& a, Direction direction) {
    Tensor reversed(a.shape());
    std::reverse_copy(a.data().begin(), a.data().end(), reversed.data().begin());
    return strip_apply(grad_out, reversed, direction);
}

/// d/da_k of <grad_out, strip_apply(x, a)> = Σ grad_out[c,h,w] · x[c,h,w-r+k].
inline Tensor strip_apply_tap_gradient(const Tensor& x, const Tensor& grad_out, std::size_t taps,
                                       Direction direction) {
    require_same_shape(x, grad_out, "strip_apply_tap_gradient");
    Tensor g({taps});
    for (std::size_t k = 0; k < taps; ++k) {
        Tensor onehot({taps});
        onehot[k] = 1.0;
        g[k] = dot(grad_out, strip_apply(x, onehot, direction));
    }
    return g;
}

struct StripGradients {
    Tensor input;
    Tensor weight;
    Tensor bias;
};

inline StripGradients strip_operator_backward(const Tensor& x, const StripParams& p, const Tensor& grad_out) {
    require_same_shape(x, grad_out, "strip_operator_backward");
    const Tensor pooled = gap_spatial(x);
    const Tensor a = strip_weights(x, p);
    const std::size_t k = p.k(), c = x.extent(0);
    const std::size_t plane = x.extent(1) * x.extent(2);

    const Tensor grad_a = strip_apply_tap_gradient(x, grad_out, k, p.direction);
    Tensor grad_z({k});
    for (std::size_t i = 0; i < k; ++i) grad_z[i] = grad_a[i] * a[i] * (1.0 - a[i]);

    StripGradients g{strip_apply_adjoint(grad_out, a, p.direction), Tensor({k, c}), grad_z};
    Tensor grad_pooled({c});
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            g.weight[i * c + ch] = grad_z[i] * pooled[ch];
            grad_pooled[ch] += p.weight[i * c + ch] * grad_z[i];
        }
    }
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double share = grad_pooled[ch] / static_cast<double>(plane);
        for (std::size_t i = 0; i < plane; ++i) g.input[ch * plane + i] += share;
    }
    return g;
}

struct StdaGradients {
    Tensor input;
    StripGradients horizontal;
    StripGradients vertical;
};

inline StdaGradients stda_backward(const Tensor& x, const StdaParams& p, const Tensor& grad_out) {
    const StdaTrace t = stda_traced(x, p);
    StdaGradients g;
    g.vertical = strip_operator_backward(t.intermediate, p.vertical, grad_out);
    g.horizontal = strip_operator_backward(x, p.horizontal, g.vertical.input);
    g.input = g.horizontal.input;
    return g;
}

// Operation-count models (multiply-accumulates counted as one operation each).

struct SelfAttentionFlops {
    std::uint64_t projections = 0;    // 3·H·W·C²
    std::uint64_t attention_map = 0;  // (H·W)²·C
    std::uint64_t weighted_sum = 0;   // (H·W)²·C
    std::uint64_t total = 0;
};

struct StdaFlops {
    std::uint64_t integration = 0;    // 2·H·W·C·K, both directions
    std::uint64_t weight_branch = 0;  // 2·(H·W·C + K·C + K)
    std::uint64_t total = 0;
};

inline void require_positive_extents(std::initializer_list<std::uint64_t> extents, const char* op) {
    for (auto e : extents)
        if (e == 0) throw std::invalid_argument(std::string(op) + ": extents must be positive");
}

inline SelfAttentionFlops flops_self_attention(std::uint64_t h, std::uint64_t w, std::uint64_t c) {
    require_positive_extents({h, w, c}, "flops_self_attention");
    const std::uint64_t n = h * w;
    SelfAttentionFlops f;
    f.projections = 3 * n * c * c;
    f.attention_map = n * n * c;
    f.weighted_sum = n * n * c;
    f.total = f.projections + f.attention_map + f.weighted_sum;
    return f;
}

inline StdaFlops flops_stda(std::uint64_t h, std::uint64_t w, std::uint64_t c, std::uint64_t k) {
    require_positive_extents({h, w, c, k}, "flops_stda");
    StdaFlops f;
    f.integration = 2 * h * w * c * k;
    f.weight_branch = 2 * (h * w * c + k * c + k);
    f.total = f.integration + f.weight_branch;
    return f;
}

}  // namespace striplab
