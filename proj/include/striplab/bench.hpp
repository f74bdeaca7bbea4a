#pragma once

// Single-threaded timing of self-attention vs STDA over a grid of spatial sizes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <new>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "striplab/attention.hpp"
#include "striplab/verification/generators.hpp"
#include "striplab/verification/random.hpp"

namespace striplab::bench {

inline constexpr const char* kCsvVersionLine = "# strip-attention-lab bench v1";
inline constexpr const char* kCsvHeader = "op,H,W,C,K,ns_median,flops_model,flops_per_ns";

struct GridPoint {
    std::size_t h;
    std::size_t w;
};

struct BenchConfig {
    std::vector<GridPoint> grid{{8, 8}, {16, 16}, {32, 32}, {64, 64}};
    std::size_t channels = 32;
    std::size_t k = 7;
    std::size_t repetitions = 5;
    std::size_t warmup = 1;
    std::uint64_t seed = verify::kDefaultSeed;
    /// Each repetition repeats the call until at least this long has elapsed and reports
    /// the per-call time, so microsecond-scale kernels are not dominated by clock noise.
    std::chrono::nanoseconds min_sample_time = std::chrono::milliseconds(2);

    void validate() const {
        if (grid.empty()) throw std::invalid_argument("bench: empty grid");
        for (const auto& g : grid)
            if (g.h == 0 || g.w == 0) throw std::invalid_argument("bench: grid extents must be positive");
        if (channels == 0) throw std::invalid_argument("bench: channels must be positive");
        if (k == 0 || k % 2 == 0) throw std::invalid_argument("bench: K must be odd and positive");
        if (repetitions < 3) throw std::invalid_argument("bench: repetitions must be at least 3");
        if (warmup < 1) throw std::invalid_argument("bench: warmup must be at least 1");
    }
};

struct BenchRecord {
    std::string op;
    std::size_t h = 0, w = 0, c = 0, k = 0;
    double ns_median = 0.0;
    std::uint64_t flops_model = 0;
    double flops_per_ns = 0.0;
};

struct SkippedPoint {
    std::string op;
    GridPoint point;
    std::string reason;
};

struct ScalingFit {
    std::string op;
    double slope = 0.0;  // d log(time) / d log(H·W)
};

struct BenchResult {
    std::vector<BenchRecord> records;
    std::vector<SkippedPoint> skipped;
    std::vector<ScalingFit> fits;
};

inline double median(std::vector<double> v) {
    if (v.empty()) throw std::invalid_argument("median of empty sample");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Median per-call wall time in nanoseconds over `reps` samples after `warmup` calls.
inline double time_median_ns(const std::function<void()>& fn, std::size_t reps, std::size_t warmup,
                             std::chrono::nanoseconds min_sample_time) {
    using clock = std::chrono::steady_clock;
    for (std::size_t i = 0; i < warmup; ++i) fn();
    std::vector<double> samples;
    samples.reserve(reps);
    for (std::size_t r = 0; r < reps; ++r) {
        std::size_t calls = 0;
        const auto start = clock::now();
        auto elapsed = clock::duration::zero();
        do {
            fn();
            ++calls;
            elapsed = clock::now() - start;
        } while (elapsed < min_sample_time);
        samples.push_back(std::chrono::duration<double, std::nano>(elapsed).count() / static_cast<double>(calls));
    }
    return median(std::move(samples));
}

/// Least-squares slope of log(y) against log(x).
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("loglog_slope: need >= 2 paired points");
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double lx = std::log(x[i]), ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double denom = n * sxx - sx * sx;
    if (denom == 0.0) throw std::invalid_argument("loglog_slope: x values are all equal");
    return (n * sxy - sx * sy) / denom;
}

inline volatile double sink = 0.0;

/// Stores one output element so the optimizer cannot drop benchmarked work.
inline void keep(const Tensor& t) { sink = t[0]; }

inline BenchResult run_bench(const BenchConfig& cfg) {
    cfg.validate();
    verify::Rng rng(cfg.seed);
    const auto attn = verify::random_attention_params(rng, cfg.channels);
    const auto stda_params = verify::random_stda_params(rng, cfg.k, cfg.channels);

    BenchResult result;
    for (const std::string op : {"self_attention", "stda"}) {
        std::vector<double> sizes, times;
        for (const auto& g : cfg.grid) {
            BenchRecord rec{op, g.h, g.w, cfg.channels, cfg.k};
            try {
                const Tensor x = rng.tensor({cfg.channels, g.h, g.w});
                if (op == "self_attention") {
                    rec.flops_model = flops_self_attention(g.h, g.w, cfg.channels).total;
                    rec.ns_median = time_median_ns([&] { keep(self_attention(x, attn)); }, cfg.repetitions,
                                                   cfg.warmup, cfg.min_sample_time);
                } else {
                    rec.flops_model = flops_stda(g.h, g.w, cfg.channels, cfg.k).total;
                    rec.ns_median = time_median_ns([&] { keep(stda(x, stda_params)); }, cfg.repetitions, cfg.warmup,
                                                   cfg.min_sample_time);
                }
            } catch (const std::bad_alloc&) {
                result.skipped.push_back({op, g, "bad_alloc"});
                continue;
            } catch (const std::length_error&) {
                result.skipped.push_back({op, g, "length_error"});
                continue;
            }
            rec.flops_per_ns = static_cast<double>(rec.flops_model) / rec.ns_median;
            sizes.push_back(static_cast<double>(g.h * g.w));
            times.push_back(rec.ns_median);
            result.records.push_back(rec);
        }
        bool distinct = false;
        for (double s : sizes) distinct = distinct || s != sizes.front();
        if (sizes.size() >= 2 && distinct) result.fits.push_back({op, loglog_slope(sizes, times)});
    }
    return result;
}

inline void write_csv(std::ostream& os, const BenchResult& r) {
    os << kCsvVersionLine << '\n' << kCsvHeader << '\n';
    char buf[64];
    for (const auto& rec : r.records) {
        os << rec.op << ',' << rec.h << ',' << rec.w << ',' << rec.c << ',' << rec.k << ',';
        std::snprintf(buf, sizeof buf, "%.1f", rec.ns_median);
        os << buf << ',' << rec.flops_model << ',';
        std::snprintf(buf, sizeof buf, "%.6g", rec.flops_per_ns);
        os << buf << '\n';
    }
    for (const auto& s : r.skipped) {
        os << "# skipped op=" << s.op << " H=" << s.point.h << " W=" << s.point.w << " reason=" << s.reason << '\n';
    }
    for (const auto& f : r.fits) {
        std::snprintf(buf, sizeof buf, "%.4f", f.slope);
        os << "# slope op=" << f.op << " loglog_time_vs_HW=" << buf << '\n';
    }
}

/// Parses "8,16,32" (square sizes) or "8x16,32x32" (H×W) into grid points.
inline std::vector<GridPoint> parse_grid(const std::string& spec) {
    std::vector<GridPoint> grid;
    std::size_t pos = 0;
    while (pos <= spec.size()) {
        const std::size_t comma = std::min(spec.find(',', pos), spec.size());
        const std::string item = spec.substr(pos, comma - pos);
        if (item.empty()) throw std::invalid_argument("grid: empty entry in '" + spec + "'");
        const std::size_t x = item.find('x');
        auto num = [&](const std::string& s) {
            std::size_t used = 0;
            unsigned long v = 0;
            const bool digits = !s.empty() && s.find_first_not_of("0123456789") == std::string::npos;
            try {
                if (digits) v = std::stoul(s, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (!digits || used != s.size() || v == 0) throw std::invalid_argument("grid: bad extent '" + s + "'");
            return static_cast<std::size_t>(v);
        };
        if (x == std::string::npos) {
            const std::size_t n = num(item);
            grid.push_back({n, n});
        } else {
            grid.push_back({num(item.substr(0, x)), num(item.substr(x + 1))});
        }
        pos = comma + 1;
    }
    return grid;
}

}  // namespace striplab::bench
