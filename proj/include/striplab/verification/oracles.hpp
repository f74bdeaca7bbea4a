#pragma once

// Reference implementations written as direct loops over the defining formulas.
// Nothing here calls the optimized kernels; shared pieces are limited to the Tensor
// container, the parameter structs, and (for the losses) the opaque extractors.

#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "striplab/attention.hpp"
#include "striplab/condition_fusion.hpp"
#include "striplab/diffusion_objectives.hpp"
#include "striplab/temporal_graph.hpp"

namespace striplab::oracle {

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
    if (b.extent(0) != k) throw ShapeError("oracle matmul: inner extents differ");
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += a.at(i, p) * b.at(p, j);
            out.at(i, j) = s;
        }
    return out;
}

inline double naive_sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline Tensor strip_weights(const Tensor& x, const StripParams& p) {
    const std::size_t C = x.extent(0), H = x.extent(1), W = x.extent(2), K = p.weight.extent(0);
    std::vector<double> pooled(C, 0.0);
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t h = 0; h < H; ++h)
            for (std::size_t w = 0; w < W; ++w) pooled[c] += x.at(c, h, w);
        pooled[c] /= static_cast<double>(H * W);
    }
    Tensor a({K});
    for (std::size_t k = 0; k < K; ++k) {
        double z = p.bias.at(k);
        for (std::size_t c = 0; c < C; ++c) z += p.weight.at(k, c) * pooled[c];
        a.at(k) = naive_sigmoid(z);
    }
    return a;
}

/// X̂[c,h,w] = Σ_{k=0}^{K-1} A[k]·X[c,h,w-⌊K/2⌋+k], reading zero outside the map.
inline Tensor strip_apply(const Tensor& x, const Tensor& a, Direction direction) {
    const long C = static_cast<long>(x.extent(0)), H = static_cast<long>(x.extent(1)),
               W = static_cast<long>(x.extent(2)), K = static_cast<long>(a.size());
    Tensor out(x.shape());
    for (long c = 0; c < C; ++c)
        for (long h = 0; h < H; ++h)
            for (long w = 0; w < W; ++w) {
                double s = 0.0;
                for (long k = 0; k < K; ++k) {
                    long hh = h, ww = w;
                    if (direction == Direction::Horizontal) {
                        ww = w - K / 2 + k;
                    } else {
                        hh = h - K / 2 + k;
                    }
                    const double v = (hh < 0 || hh >= H || ww < 0 || ww >= W) ? 0.0 : x.at(c, hh, ww);
                    s += a.at(k) * v;
                }
                out.at(c, h, w) = s;
            }
    return out;
}

inline Tensor stda(const Tensor& x, const StdaParams& p) {
    const Tensor mid = oracle::strip_apply(x, oracle::strip_weights(x, p.horizontal), Direction::Horizontal);
    return oracle::strip_apply(mid, oracle::strip_weights(mid, p.vertical), Direction::Vertical);
}

/// out[c,h,w] = Σ_{i,j} kernel[i][j]·x[c, h-r+i, w-r+j] with zero padding.
inline Tensor correlate2d(const Tensor& x, const Tensor& kernel) {
    const long C = static_cast<long>(x.extent(0)), H = static_cast<long>(x.extent(1)),
               W = static_cast<long>(x.extent(2)), K = static_cast<long>(kernel.extent(0));
    const long r = K / 2;
    Tensor out(x.shape());
    for (long c = 0; c < C; ++c)
        for (long h = 0; h < H; ++h)
            for (long w = 0; w < W; ++w) {
                double s = 0.0;
                for (long i = 0; i < K; ++i)
                    for (long j = 0; j < K; ++j) {
                        const long hh = h - r + i, ww = w - r + j;
                        if (hh < 0 || hh >= H || ww < 0 || ww >= W) continue;
                        s += kernel.at(i, j) * x.at(c, hh, ww);
                    }
                out.at(c, h, w) = s;
            }
    return out;
}

/// Per-pair attention: every output token visits every key explicitly.
inline Tensor self_attention(const Tensor& x, const SelfAttentionParams& p) {
    const std::size_t C = x.extent(0), H = x.extent(1), W = x.extent(2), N = H * W;
    auto token = [&](std::size_t n, std::size_t c) { return x.at(c, n / W, n % W); };
    auto project = [&](const Tensor& w, std::size_t n, std::size_t j) {
        double s = 0.0;
        for (std::size_t c = 0; c < C; ++c) s += token(n, c) * w.at(c, j);
        return s;
    };
    std::vector<double> q(N * C), k(N * C), v(N * C);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t j = 0; j < C; ++j) {
            q[n * C + j] = project(p.w_q, n, j);
            k[n * C + j] = project(p.w_k, n, j);
            v[n * C + j] = project(p.w_v, n, j);
        }
    const double scale = p.scale_by_sqrt_d ? 1.0 / std::sqrt(static_cast<double>(C)) : 1.0;
    Tensor out(x.shape());
    std::vector<double> logits(N);
    for (std::size_t i = 0; i < N; ++i) {
        double mx = -INFINITY;
        for (std::size_t j = 0; j < N; ++j) {
            double s = 0.0;
            for (std::size_t d = 0; d < C; ++d) s += q[i * C + d] * k[j * C + d];
            logits[j] = s * scale;
            mx = std::max(mx, logits[j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < N; ++j) z += std::exp(logits[j] - mx);
        for (std::size_t c = 0; c < C; ++c) {
            double s = 0.0;
            for (std::size_t j = 0; j < N; ++j) s += std::exp(logits[j] - mx) / z * v[j * C + c];
            out.at(c, i / W, i % W) = s;
        }
    }
    return out;
}

inline Tensor frame_pool(const Tensor& x) {
    const std::size_t B = x.extent(0), C = x.extent(1), T = x.extent(2), H = x.extent(3), W = x.extent(4);
    Tensor out({B, T, C});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t c = 0; c < C; ++c) {
                double s = 0.0;
                for (std::size_t h = 0; h < H; ++h)
                    for (std::size_t w = 0; w < W; ++w) s += x.at(b, c, t, h, w);
                out.at(b, t, c) = s / static_cast<double>(H * W);
            }
    return out;
}

/// Per-node loop over the literal edge list, one layer at a time.
inline Tensor gnn_forward(const Tensor& nodes, const std::vector<Edge>& edges, const GnnLayerParams& p) {
    const std::size_t B = nodes.extent(0), T = nodes.extent(1), C = nodes.extent(2);
    Tensor h = nodes;
    for (std::size_t layer = 0; layer < p.layers; ++layer) {
        Tensor next(h.shape());
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t t = 0; t < T; ++t) {
                std::vector<double> agg(C, 0.0);
                std::size_t count = 0;
                for (const Edge& e : edges) {
                    if (e.to != t) continue;
                    ++count;
                    for (std::size_t c = 0; c < C; ++c) agg[c] += h.at(b, e.from, c);
                }
                for (std::size_t i = 0; i < C; ++i) {
                    double z = p.bias.at(i);
                    for (std::size_t j = 0; j < C; ++j) {
                        z += p.w_self.at(i, j) * h.at(b, t, j);
                        if (count) z += p.w_nbr.at(i, j) * (agg[j] / static_cast<double>(count));
                    }
                    switch (p.activation) {
                        case Activation::Identity: break;
                        case Activation::ReLU: z = z > 0.0 ? z : 0.0; break;
                        case Activation::Tanh: z = std::tanh(z); break;
                    }
                    next.at(b, t, i) = z;
                }
            }
        h = std::move(next);
    }
    return h;
}

inline Tensor broadcast_add(const Tensor& x, const Tensor& f) {
    Tensor out = x;
    for (std::size_t b = 0; b < x.extent(0); ++b)
        for (std::size_t c = 0; c < x.extent(1); ++c)
            for (std::size_t t = 0; t < x.extent(2); ++t)
                for (std::size_t h = 0; h < x.extent(3); ++h)
                    for (std::size_t w = 0; w < x.extent(4); ++w) out.at(b, c, t, h, w) += f.at(b, t, c);
    return out;
}

inline Tensor object_branch(const Tensor& x, const ObjectFeatures& o, const GnnLayerParams& p) {
    const std::size_t B = o.values.extent(0), T = o.values.extent(1), N = o.values.extent(2), C = o.values.extent(3);
    std::vector<Edge> all_pairs;
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j)
            if (i != j) all_pairs.push_back({i, j});
    Tensor g({B, T, C});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < T; ++t) {
            Tensor frame({1, N, C});
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t c = 0; c < C; ++c) frame.at(0, n, c) = o.values.at(b, t, n, c);
            const Tensor refined = oracle::gnn_forward(frame, all_pairs, p);
            for (std::size_t c = 0; c < C; ++c) {
                double s = 0.0;
                for (std::size_t n = 0; n < N; ++n) s += refined.at(0, n, c);
                g.at(b, t, c) = s / static_cast<double>(N);
            }
        }
    return oracle::broadcast_add(x, g);
}

inline Tensor tfrm(const Tensor& x, const GnnLayerParams& p, const std::optional<ObjectBranch>& objects = std::nullopt) {
    const Tensor nodes = oracle::frame_pool(x);
    std::vector<Edge> edges;
    for (std::size_t t = 1; t < x.extent(2); ++t) {
        edges.push_back({t - 1, t});
        edges.push_back({t, t - 1});
    }
    Tensor out = oracle::broadcast_add(x, oracle::gnn_forward(nodes, edges, p));
    if (objects) out = oracle::object_branch(out, objects->objects, objects->params);
    return out;
}

inline Tensor fuse(const ConditionedSample& s, const FusionParams& p) {
    const std::size_t n = s.text_tokens.extent(0), dt = s.text_tokens.extent(1), da = p.w.extent(0);
    Tensor out({da});
    for (std::size_t j = 0; j < da; ++j) {
        double acc = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            double proj = p.b.at(j);
            for (std::size_t k = 0; k < dt; ++k) proj += s.text_tokens.at(t, k) * p.w.at(j, k);
            acc += proj;
        }
        out.at(j) = s.audio_feature.at(j) + p.lambda * (acc / static_cast<double>(n));
    }
    return out;
}

inline double squared_distance_mean(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s / static_cast<double>(a.size());
}

inline double noise_loss(const Tensor& eps_true, const Tensor& eps_pred) {
    return squared_distance_mean(eps_true, eps_pred);
}

inline Tensor estimate_clean_latent(const Tensor& z_t, const Tensor& eps_pred, double alpha_bar) {
    Tensor out(z_t.shape());
    for (std::size_t i = 0; i < z_t.size(); ++i)
        out[i] = (z_t[i] - std::sqrt(1.0 - alpha_bar) * eps_pred[i]) / std::sqrt(alpha_bar);
    return out;
}

inline double sync_loss(const ClipWindow& clip, const SyncScorer& scorer) { return scorer.score(clip.video, clip.audio); }

inline double lpips_loss(const Tensor& x_hat, const Tensor& x, const LayeredFeatureExtractor& extractor,
                         std::span<const std::size_t> layers) {
    double total = 0.0;
    for (std::size_t l : layers) total += squared_distance_mean(extractor.layer(x_hat, l), extractor.layer(x, l));
    return total;
}

inline double trepa_loss(const Tensor& clip_hat, const Tensor& clip, const FeatureExtractor& encoder) {
    return squared_distance_mean(encoder.extract(clip_hat), encoder.extract(clip));
}

inline double total_loss(const LossComponents& c, const LossWeights& w) {
    const double terms[] = {w.noise * c.noise, w.sync * c.sync, w.lpips * c.lpips, w.trepa * c.trepa};
    double s = 0.0;
    for (double t : terms) s += t;
    return s;
}

}  // namespace striplab::oracle
