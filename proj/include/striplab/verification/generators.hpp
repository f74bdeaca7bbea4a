#pragma once

// Random problem instances for the oracle, gradient, and probe suites.

#include "striplab/attention.hpp"
#include "striplab/condition_fusion.hpp"
#include "striplab/temporal_graph.hpp"
#include "striplab/verification/random.hpp"

namespace striplab::verify {

inline StripParams random_strip_params(Rng& rng, Direction dir, std::size_t k, std::size_t channels) {
    return {dir, rng.tensor({k, channels}), rng.tensor({k})};
}

inline StdaParams random_stda_params(Rng& rng, std::size_t k, std::size_t channels) {
    return {random_strip_params(rng, Direction::Horizontal, k, channels),
            random_strip_params(rng, Direction::Vertical, k, channels)};
}

inline SelfAttentionParams random_attention_params(Rng& rng, std::size_t channels, bool scaled = false) {
    return {rng.tensor({channels, channels}), rng.tensor({channels, channels}), rng.tensor({channels, channels}),
            scaled};
}

inline GnnLayerParams random_gnn_params(Rng& rng, std::size_t channels, std::size_t layers,
                                        Activation act = Activation::Tanh) {
    return {rng.tensor({channels, channels}), rng.tensor({channels, channels}), rng.tensor({channels}), act, layers};
}

inline FusionParams random_fusion_params(Rng& rng, std::size_t audio_dim, std::size_t text_dim,
                                         double lambda = kDefaultFusionLambda) {
    return {rng.tensor({audio_dim, text_dim}), rng.tensor({audio_dim}), lambda};
}

inline ConditionedSample random_sample(Rng& rng, std::string id, std::size_t audio_dim, std::size_t text_dim,
                                       std::size_t tokens) {
    return {std::move(id), rng.tensor({audio_dim}), rng.tensor({tokens, text_dim}), rng.tensor({audio_dim})};
}

/// Strictly positive frozen strip taps, in the range a sigmoid branch produces.
inline Tensor random_taps(Rng& rng, std::size_t k) { return rng.tensor({k}, 0.05, 1.0); }

}  // namespace striplab::verify
