#pragma once

// Structural probes: impulse responses of spatial operators and single-frame
// perturbations of the temporal chain.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "striplab/temporal_graph.hpp"

namespace striplab::verify {

/// Response of `op` to a unit impulse at (c, h, w) in an otherwise zero tensor of `shape`.
inline Tensor impulse_response(const std::function<Tensor(const Tensor&)>& op, std::size_t c, std::size_t h,
                               std::size_t w, const Shape& shape) {
    Tensor x(shape);
    x.at(c, h, w) = 1.0;
    return op(x);
}

struct ChainInstance {
    Tensor x;  // B×C×T×H×W
    GnnLayerParams params;
};

/**
 * Adds `delta` to every element of input frame `t_perturb` (shifting its node feature by
 * delta in every channel), reruns tfrm with `layers` message-passing layers, and returns
 * the max abs output change for each frame.
 */
inline std::vector<double> chain_influence_probe(const ChainInstance& inst, std::size_t t_perturb,
                                                 std::size_t layers, double delta = 1.0) {
    require_rank(inst.x, 5, "chain_influence_probe");
    const std::size_t B = inst.x.extent(0), C = inst.x.extent(1), T = inst.x.extent(2);
    const std::size_t plane = inst.x.extent(3) * inst.x.extent(4);
    if (t_perturb >= T) throw std::out_of_range("chain_influence_probe: frame index out of range");

    GnnLayerParams p = inst.params;
    p.layers = layers;
    const Tensor base = tfrm(inst.x, p);
    Tensor shifted = inst.x;
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < plane; ++i) shifted[((b * C + c) * T + t_perturb) * plane + i] += delta;
    const Tensor moved = tfrm(shifted, p);

    std::vector<double> influence(T, 0.0);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t t = 0; t < T; ++t)
                for (std::size_t i = 0; i < plane; ++i) {
                    const std::size_t k = ((b * C + c) * T + t) * plane + i;
                    influence[t] = std::max(influence[t], std::abs(moved[k] - base[k]));
                }
    return influence;
}

}  // namespace striplab::verify
