#pragma once

#include <cstdint>
#include <cstdlib>
#include <random>
#include <string>

#include "striplab/tensor.hpp"

namespace striplab::verify {

/// Seed used by every randomized suite unless STRIPLAB_SEED overrides it.
inline constexpr std::uint64_t kDefaultSeed = 20240917;

inline std::uint64_t seed_from_env(std::uint64_t fallback = kDefaultSeed) {
    if (const char* env = std::getenv("STRIPLAB_SEED"); env && *env) {
        try {
            return std::stoull(env);
        } catch (const std::exception&) {
            throw std::invalid_argument(std::string("STRIPLAB_SEED is not an unsigned integer: ") + env);
        }
    }
    return fallback;
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    double uniform(double lo = -1.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(gen_); }

    /// Uniform integer in [lo, hi].
    std::size_t index(std::size_t lo, std::size_t hi) {
        return std::uniform_int_distribution<std::size_t>(lo, hi)(gen_);
    }

    std::size_t odd(std::size_t max_odd) { return 2 * index(0, (max_odd - 1) / 2) + 1; }

    Tensor tensor(Shape shape, double lo = -1.0, double hi = 1.0) {
        Tensor t(std::move(shape));
        for (auto& v : t.data()) v = uniform(lo, hi);
        return t;
    }

    std::uint64_t next_seed() { return gen_(); }

private:
    std::mt19937_64 gen_;
};

}  // namespace striplab::verify
