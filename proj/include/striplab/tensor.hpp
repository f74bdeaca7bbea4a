#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace striplab {

/// Thrown when operand shapes are incompatible with an operation.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Thrown by cosine similarity when either operand has zero norm.
class ZeroNormError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

using Shape = std::vector<std::size_t>;

inline std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

/**
 * Dense row-major tensor of doubles.
 *
 * Every extent is positive and the rank is at least one, so a tensor is never empty.
 * No broadcasting or strided views: operations that combine tensors check shapes
 * explicitly and fail with ShapeError.
 */
class Tensor {
public:
    Tensor() : shape_{1}, data_(1, 0.0) {}

    explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)) {
        data_.assign(checked_size(shape_), fill);
    }

    Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != checked_size(shape_)) {
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_string(shape_));
        }
    }

    /// Builds a matrix from nested row lists.
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows) {
        const std::size_t m = rows.size();
        const std::size_t n = m ? rows.begin()->size() : 0;
        std::vector<double> data;
        data.reserve(m * n);
        for (const auto& row : rows) {
            if (row.size() != n) throw ShapeError("ragged matrix literal");
            data.insert(data.end(), row.begin(), row.end());
        }
        return Tensor({m, n}, std::move(data));
    }

    static Tensor vector(std::initializer_list<double> values) {
        return Tensor({values.size()}, std::vector<double>(values));
    }

    static Tensor identity(std::size_t n) {
        Tensor t({n, n});
        for (std::size_t i = 0; i < n; ++i) t.data_[i * n + i] = 1.0;
        return t;
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t extent(std::size_t axis) const {
        if (axis >= shape_.size()) {
            throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_string(shape_));
        }
        return shape_[axis];
    }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    /// Bounds-checked multi-index access.
    template <typename... Idx>
    double& at(Idx... idx) {
        return data_[offset({static_cast<std::size_t>(idx)...})];
    }
    template <typename... Idx>
    double at(Idx... idx) const {
        return data_[offset({static_cast<std::size_t>(idx)...})];
    }

    std::size_t offset(std::initializer_list<std::size_t> idx) const {
        if (idx.size() != shape_.size()) {
            throw ShapeError("index rank " + std::to_string(idx.size()) + " for tensor " + shape_string(shape_));
        }
        std::size_t off = 0;
        std::size_t axis = 0;
        for (std::size_t i : idx) {
            if (i >= shape_[axis]) throw std::out_of_range("tensor index out of range");
            off = off * shape_[axis] + i;
            ++axis;
        }
        return off;
    }

    /// Same data under a new shape of equal element count.
    Tensor reshaped(Shape shape) const {
        return Tensor(std::move(shape), data_);
    }

    bool all_finite() const noexcept {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    static std::size_t checked_size(const Shape& shape) {
        if (shape.empty()) throw ShapeError("tensor rank must be at least 1");
        std::size_t n = 1;
        for (std::size_t e : shape) {
            if (e == 0) throw ShapeError("zero extent in shape " + shape_string(shape));
            n *= e;
        }
        return n;
    }

    Shape shape_;
    std::vector<double> data_;
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
    }
}

inline void require_rank(const Tensor& t, std::size_t rank, const char* op) {
    if (t.rank() != rank) {
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_string(t.shape()));
    }
}

// Elementwise helpers. Shapes must match exactly.

inline Tensor map(const Tensor& x, const std::function<double(double)>& f) {
    Tensor out(x.shape());
    std::transform(x.data().begin(), x.data().end(), out.data().begin(), f);
    return out;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

inline Tensor scale(const Tensor& a, double s) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * s;
    return out;
}

/// a + s * b
inline Tensor axpy(const Tensor& a, double s, const Tensor& b) {
    require_same_shape(a, b, "axpy");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + s * b[i];
    return out;
}

inline double dot(const Tensor& a, const Tensor& b) {
    if (a.size() != b.size()) {
        throw ShapeError("dot: size mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

/// Recursive pairwise summation; error grows as O(log n) instead of O(n).
inline double pairwise_sum(std::span<const double> xs) {
    if (xs.size() <= 8) {
        double s = 0.0;
        for (double v : xs) s += v;
        return s;
    }
    const std::size_t half = xs.size() / 2;
    return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

inline Tensor transpose(const Tensor& a) {
    require_rank(a, 2, "transpose");
    const std::size_t m = a.extent(0), n = a.extent(1);
    Tensor out({n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
    return out;
}

/// Copy of `count` consecutive slices along axis 0 starting at `start`.
inline Tensor slice_leading(const Tensor& t, std::size_t start, std::size_t count) {
    if (count == 0 || start + count > t.extent(0)) {
        throw ShapeError("slice [" + std::to_string(start) + ", " + std::to_string(start + count) +
                         ") out of range for " + shape_string(t.shape()));
    }
    const std::size_t stride = t.size() / t.extent(0);
    Shape shape = t.shape();
    shape[0] = count;
    auto first = t.data().begin() + static_cast<std::ptrdiff_t>(start * stride);
    return Tensor(std::move(shape), std::vector<double>(first, first + static_cast<std::ptrdiff_t>(count * stride)));
}

/// Standard matrix product. Each output row depends only on the matching row of `a`.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(0)) {
        throw ShapeError("matmul: incompatible shapes " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
    }
    const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
    Tensor out({m, n});
    const auto A = a.data();
    const auto B = b.data();
    auto C = out.data();
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = C.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = A[i * k + p];
            const double* brow = B.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
    return out;
}

/// Row-wise softmax with max subtraction.
inline Tensor softmax_rows(const Tensor& x) {
    require_rank(x, 2, "softmax_rows");
    const std::size_t m = x.extent(0), n = x.extent(1);
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = x.data().data() + i * n;
        double* orow = out.data().data() + i * n;
        const double mx = *std::max_element(row, row + n);
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            orow[j] = std::exp(row[j] - mx);
            sum += orow[j];
        }
        const double inv = 1.0 / sum;
        for (std::size_t j = 0; j < n; ++j) orow[j] *= inv;
    }
    return out;
}

inline double sigmoid(double v) {
    // Branch on sign so exp never overflows.
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
}

inline Tensor sigmoid(const Tensor& x) {
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = sigmoid(x[i]);
    return out;
}

/// Per-channel mean over the spatial extent of a C×H×W tensor.
inline Tensor gap_spatial(const Tensor& x) {
    require_rank(x, 3, "gap_spatial");
    const std::size_t c = x.extent(0), plane = x.extent(1) * x.extent(2);
    Tensor out({c});
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double* p = x.data().data() + ch * plane;
        out[ch] = std::accumulate(p, p + plane, 0.0) / static_cast<double>(plane);
    }
    return out;
}

inline double l2_norm(const Tensor& a) { return std::sqrt(dot(a, a)); }

/// a·b / (‖a‖‖b‖). Rejects zero-norm operands instead of returning 0.
inline double cosine_similarity(const Tensor& a, const Tensor& b) {
    if (a.size() != b.size()) {
        throw ShapeError("cosine_similarity: size mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
    }
    const double na = l2_norm(a);
    const double nb = l2_norm(b);
    if (na == 0.0 || nb == 0.0) throw ZeroNormError("cosine_similarity: zero-norm operand");
    return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

}  // namespace striplab
