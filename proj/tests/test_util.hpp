#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <gtest/gtest.h>

#include "striplab/tensor.hpp"
#include "striplab/verification/random.hpp"

namespace striplab::testing {

inline constexpr double kTol = 1e-12;
inline constexpr int kPropertyTrials = 50;

inline verify::Rng seeded_rng(std::uint64_t salt = 0) { return verify::Rng(verify::seed_from_env() + salt); }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("striplab-test-" + std::to_string(rd()) + "-" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

}  // namespace striplab::testing

#define EXPECT_TENSOR_NEAR(a, b, tol)                                        \
    do {                                                                     \
        ASSERT_EQ((a).shape(), (b).shape());                                 \
        EXPECT_LE(::striplab::max_abs_diff((a), (b)), (tol));                \
    } while (0)
