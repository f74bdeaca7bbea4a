#pragma once

// Temporal frame graph reasoning over B×C×T×H×W latents: frames are pooled to nodes,
// joined by a bidirectional chain, refined by message passing and added back.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "striplab/tensor.hpp"

namespace striplab {

/// Directed edge between node indices (0-based).
struct Edge {
    std::size_t from;
    std::size_t to;
    friend bool operator==(const Edge&, const Edge&) = default;
};

/// Bidirectional path over T frames: (t,t+1) and (t+1,t) for every adjacent pair.
inline std::vector<Edge> chain_edges(std::size_t frames) {
    if (frames == 0) throw std::invalid_argument("chain_edges: frame count must be positive");
    std::vector<Edge> edges;
    edges.reserve(2 * (frames - 1));
    for (std::size_t t = 0; t + 1 < frames; ++t) {
        edges.push_back({t, t + 1});
        edges.push_back({t + 1, t});
    }
    return edges;
}

/// All ordered pairs of distinct nodes.
inline std::vector<Edge> complete_edges(std::size_t nodes) {
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < nodes; ++i)
        for (std::size_t j = 0; j < nodes; ++j)
            if (i != j) edges.push_back({i, j});
    return edges;
}

struct ChainGraph {
    Tensor nodes;  // B×T×C
    std::vector<Edge> edges;

    static ChainGraph over(Tensor nodes) {
        require_rank(nodes, 3, "ChainGraph");
        auto edges = chain_edges(nodes.extent(1));
        return {std::move(nodes), std::move(edges)};
    }
};

enum class Activation { Identity, ReLU, Tanh };

inline double activate(Activation act, double v) {
    switch (act) {
        case Activation::ReLU: return v > 0.0 ? v : 0.0;
        case Activation::Tanh: return std::tanh(v);
        case Activation::Identity: break;
    }
    return v;
}

inline double activate_derivative(Activation act, double pre) {
    switch (act) {
        case Activation::ReLU: return pre > 0.0 ? 1.0 : 0.0;
        case Activation::Tanh: {
            const double t = std::tanh(pre);
            return 1.0 - t * t;
        }
        case Activation::Identity: break;
    }
    return 1.0;
}

/**
 * Mean-aggregation message passing, repeated `layers` times with shared weights:
 *   h'_t = act(w_self·h_t + w_nbr·mean_{s∈N(t)} h_s + bias)
 * N(t) is the in-neighborhood from the edge list; an empty neighborhood contributes
 * the zero vector. layers == 0 leaves the node features unchanged.
 */
struct GnnLayerParams {
    Tensor w_self;  // C×C
    Tensor w_nbr;   // C×C
    Tensor bias;    // C
    Activation activation = Activation::Tanh;
    std::size_t layers = 1;

    std::size_t dim() const { return bias.size(); }

    void validate(std::size_t channels) const {
        for (const Tensor* w : {&w_self, &w_nbr}) {
            if (w->rank() != 2 || w->extent(0) != channels || w->extent(1) != channels) {
                throw ShapeError("gnn params: weight " + shape_string(w->shape()) + " for node dim " +
                                 std::to_string(channels));
            }
        }
        if (bias.rank() != 1 || bias.extent(0) != channels) {
            throw ShapeError("gnn params: bias " + shape_string(bias.shape()) + " for node dim " +
                             std::to_string(channels));
        }
    }

    /// All-zero weights: the message passing output is act(0) = 0 for Identity/ReLU/Tanh.
    static GnnLayerParams zeros(std::size_t channels, std::size_t layers = 1,
                                Activation act = Activation::Tanh) {
        return {Tensor({channels, channels}), Tensor({channels, channels}), Tensor({channels}), act, layers};
    }
};

namespace detail {

inline std::vector<std::vector<std::size_t>> in_neighbors(std::size_t n, const std::vector<Edge>& edges) {
    std::vector<std::vector<std::size_t>> nbrs(n);
    for (const Edge& e : edges) {
        if (e.from >= n || e.to >= n) throw ShapeError("edge references node outside the graph");
        nbrs[e.to].push_back(e.from);
    }
    return nbrs;
}

inline Tensor neighbor_mean(const Tensor& h, const std::vector<std::vector<std::size_t>>& nbrs) {
    const std::size_t n = h.extent(0), c = h.extent(1);
    Tensor m({n, c});
    for (std::size_t t = 0; t < n; ++t) {
        if (nbrs[t].empty()) continue;
        const double inv = 1.0 / static_cast<double>(nbrs[t].size());
        for (std::size_t s : nbrs[t])
            for (std::size_t ch = 0; ch < c; ++ch) m[t * c + ch] += h[s * c + ch];
        for (std::size_t ch = 0; ch < c; ++ch) m[t * c + ch] *= inv;
    }
    return m;
}

struct LayerCache {
    Tensor input;     // n×C
    Tensor nbr_mean;  // n×C
    Tensor pre;       // n×C
};

/// Runs the layers on one graph (n×C node matrix); optionally records per-layer state.
inline Tensor run_layers(Tensor h, const std::vector<std::vector<std::size_t>>& nbrs, const GnnLayerParams& p,
                         std::vector<LayerCache>* cache = nullptr) {
    const Tensor ws_t = transpose(p.w_self);
    const Tensor wn_t = transpose(p.w_nbr);
    const std::size_t n = h.extent(0), c = h.extent(1);
    for (std::size_t layer = 0; layer < p.layers; ++layer) {
        Tensor m = neighbor_mean(h, nbrs);
        Tensor pre = add(matmul(h, ws_t), matmul(m, wn_t));
        for (std::size_t t = 0; t < n; ++t)
            for (std::size_t ch = 0; ch < c; ++ch) pre[t * c + ch] += p.bias[ch];
        Tensor next(pre.shape());
        for (std::size_t i = 0; i < pre.size(); ++i) next[i] = activate(p.activation, pre[i]);
        if (cache) cache->push_back({std::move(h), std::move(m), std::move(pre)});
        h = std::move(next);
    }
    return h;
}

}  // namespace detail

/// Message passing over B independent graphs sharing one edge list. nodes: B×n×C.
inline Tensor message_pass(const Tensor& nodes, const std::vector<Edge>& edges, const GnnLayerParams& p) {
    require_rank(nodes, 3, "message_pass");
    const std::size_t batch = nodes.extent(0), n = nodes.extent(1), c = nodes.extent(2);
    p.validate(c);
    const auto nbrs = detail::in_neighbors(n, edges);
    Tensor out(nodes.shape());
    for (std::size_t b = 0; b < batch; ++b) {
        Tensor h = detail::run_layers(slice_leading(nodes, b, 1).reshaped({n, c}), nbrs, p);
        std::copy(h.data().begin(), h.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(b * n * c));
    }
    return out;
}

inline Tensor gnn_forward(const ChainGraph& g, const GnnLayerParams& p) {
    return message_pass(g.nodes, g.edges, p);
}

struct GnnGradients {
    Tensor nodes;
    Tensor w_self;
    Tensor w_nbr;
    Tensor bias;
};

/// Gradients of <grad_out, message_pass(nodes, edges, p)>.
inline GnnGradients message_pass_backward(const Tensor& nodes, const std::vector<Edge>& edges,
                                          const GnnLayerParams& p, const Tensor& grad_out) {
    require_rank(nodes, 3, "message_pass_backward");
    require_same_shape(nodes, grad_out, "message_pass_backward");
    const std::size_t batch = nodes.extent(0), n = nodes.extent(1), c = nodes.extent(2);
    p.validate(c);
    const auto nbrs = detail::in_neighbors(n, edges);
    GnnGradients g{Tensor(nodes.shape()), Tensor({c, c}), Tensor({c, c}), Tensor({c})};

    for (std::size_t b = 0; b < batch; ++b) {
        std::vector<detail::LayerCache> cache;
        detail::run_layers(slice_leading(nodes, b, 1).reshaped({n, c}), nbrs, p, &cache);
        Tensor gh = slice_leading(grad_out, b, 1).reshaped({n, c});
        for (std::size_t layer = cache.size(); layer-- > 0;) {
            const auto& lc = cache[layer];
            Tensor gpre(gh.shape());
            for (std::size_t i = 0; i < gpre.size(); ++i) gpre[i] = gh[i] * activate_derivative(p.activation, lc.pre[i]);
            g.w_self = add(g.w_self, matmul(transpose(gpre), lc.input));
            g.w_nbr = add(g.w_nbr, matmul(transpose(gpre), lc.nbr_mean));
            for (std::size_t t = 0; t < n; ++t)
                for (std::size_t ch = 0; ch < c; ++ch) g.bias[ch] += gpre[t * c + ch];

            Tensor next = matmul(gpre, p.w_self);
            const Tensor gm = matmul(gpre, p.w_nbr);
            for (std::size_t t = 0; t < n; ++t) {
                if (nbrs[t].empty()) continue;
                const double inv = 1.0 / static_cast<double>(nbrs[t].size());
                for (std::size_t s : nbrs[t])
                    for (std::size_t ch = 0; ch < c; ++ch) next[s * c + ch] += gm[t * c + ch] * inv;
            }
            gh = std::move(next);
        }
        std::copy(gh.data().begin(), gh.data().end(), g.nodes.data().begin() + static_cast<std::ptrdiff_t>(b * n * c));
    }
    return g;
}

inline GnnGradients gnn_forward_backward(const ChainGraph& g, const GnnLayerParams& p, const Tensor& grad_out) {
    return message_pass_backward(g.nodes, g.edges, p, grad_out);
}

/// Spatial mean of each frame: B×C×T×H×W -> B×T×C.
inline Tensor frame_pool(const Tensor& x) {
    require_rank(x, 5, "frame_pool");
    const std::size_t batch = x.extent(0), c = x.extent(1), frames = x.extent(2);
    const std::size_t plane = x.extent(3) * x.extent(4);
    Tensor out({batch, frames, c});
    const double* src = x.data().data();
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t t = 0; t < frames; ++t) {
                const double* p = src + ((b * c + ch) * frames + t) * plane;
                double s = 0.0;
                for (std::size_t i = 0; i < plane; ++i) s += p[i];
                out[(b * frames + t) * c + ch] = s / static_cast<double>(plane);
            }
    return out;
}

/// x[b,c,t,h,w] + f[b,t,c].
inline Tensor broadcast_add(const Tensor& x, const Tensor& f) {
    require_rank(x, 5, "broadcast_add");
    require_rank(f, 3, "broadcast_add");
    const std::size_t batch = x.extent(0), c = x.extent(1), frames = x.extent(2);
    if (f.extent(0) != batch || f.extent(1) != frames || f.extent(2) != c) {
        throw ShapeError("broadcast_add: frame features " + shape_string(f.shape()) + " for latent " +
                         shape_string(x.shape()));
    }
    const std::size_t plane = x.extent(3) * x.extent(4);
    Tensor out = x;
    double* dst = out.data().data();
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t t = 0; t < frames; ++t) {
                const double v = f[(b * frames + t) * c + ch];
                double* p = dst + ((b * c + ch) * frames + t) * plane;
                for (std::size_t i = 0; i < plane; ++i) p[i] += v;
            }
    return out;
}

/// Precomputed per-frame object descriptors, B×T×N×C.
struct ObjectFeatures {
    Tensor values;
};

struct ObjectBranch {
    ObjectFeatures objects;
    GnnLayerParams params;
};

/**
 * Object-level reasoning: message passing over the N objects of each frame (fully
 * connected within a frame, no cross-frame edges), mean over objects, broadcast add.
 */
inline Tensor object_branch(const Tensor& x, const ObjectFeatures& o, const GnnLayerParams& p) {
    require_rank(x, 5, "object_branch");
    require_rank(o.values, 4, "object_branch");
    const std::size_t batch = o.values.extent(0), frames = o.values.extent(1);
    const std::size_t n = o.values.extent(2), c = o.values.extent(3);
    if (batch != x.extent(0) || frames != x.extent(2) || c != x.extent(1)) {
        throw ShapeError("object_branch: objects " + shape_string(o.values.shape()) + " for latent " +
                         shape_string(x.shape()));
    }
    const Tensor refined = message_pass(o.values.reshaped({batch * frames, n, c}), complete_edges(n), p);
    Tensor g({batch, frames, c});
    for (std::size_t bt = 0; bt < batch * frames; ++bt)
        for (std::size_t ch = 0; ch < c; ++ch) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += refined[(bt * n + i) * c + ch];
            g[bt * c + ch] = s / static_cast<double>(n);
        }
    return broadcast_add(x, g);
}

/// Pool frames, reason over the chain graph, add back; then the object branch when supplied.
inline Tensor tfrm(const Tensor& x, const GnnLayerParams& p, const std::optional<ObjectBranch>& objects = std::nullopt) {
    const ChainGraph graph = ChainGraph::over(frame_pool(x));
    Tensor out = broadcast_add(x, gnn_forward(graph, p));
    if (objects) out = object_branch(out, objects->objects, objects->params);
    return out;
}

}  // namespace striplab
