#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "striplab/tensor.hpp"

namespace striplab::verify {

struct GradCheckReport {
    std::string op_name;
    double max_rel_error = 0.0;
    std::vector<std::size_t> worst_index;
    double step = 0.0;
    double tolerance = 0.0;
    std::size_t non_finite = 0;  // coordinates whose evaluations were not finite
    bool passed = false;
};

inline std::vector<std::size_t> unravel(std::size_t flat, const Shape& shape) {
    std::vector<std::size_t> idx(shape.size());
    for (std::size_t axis = shape.size(); axis-- > 0;) {
        idx[axis] = flat % shape[axis];
        flat /= shape[axis];
    }
    return idx;
}

/**
 * Compares an analytic gradient against central differences
 *   (f(x + h·e_i) − f(x − h·e_i)) / 2h
 * coordinate by coordinate. Relative error uses the denominator max(|a|, |n|, 1e-8).
 */
inline GradCheckReport grad_check(std::string op_name, const std::function<double(const Tensor&)>& f,
                                  const Tensor& point, const Tensor& analytic, double step = 1e-5,
                                  double tolerance = 1e-6) {
    require_same_shape(point, analytic, "grad_check");
    GradCheckReport r;
    r.op_name = std::move(op_name);
    r.step = step;
    r.tolerance = tolerance;
    Tensor x = point;
    std::size_t worst = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + step;
        const double fp = f(x);
        x[i] = orig - step;
        const double fm = f(x);
        x[i] = orig;
        const double numeric = (fp - fm) / (2.0 * step);
        if (!std::isfinite(fp) || !std::isfinite(fm) || !std::isfinite(analytic[i])) {
            ++r.non_finite;
            continue;
        }
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
        const double rel = std::abs(analytic[i] - numeric) / denom;
        if (rel > r.max_rel_error) {
            r.max_rel_error = rel;
            worst = i;
        }
    }
    r.worst_index = unravel(worst, point.shape());
    r.passed = r.non_finite == 0 && r.max_rel_error < tolerance;
    return r;
}

inline std::string format_index(const std::vector<std::size_t>& idx) {
    std::string s = "(";
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (i) s += ',';
        s += std::to_string(idx[i]);
    }
    return s + ")";
}

}  // namespace striplab::verify
