#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "advlab/error.hpp"

namespace advlab {

using Shape = std::vector<std::size_t>;

inline std::string shape_string(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i > 0) out += "x";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

/// Dense row-major array of doubles. A scalar is a tensor of shape [1].
class Tensor {
public:
    Tensor() : shape_{1}, data_(1, 0.0) {}

    Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (shape_.empty()) throw DimensionError("tensor shape must have at least one dimension");
        for (std::size_t d : shape_) {
            if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape_));
        }
        if (shape_size(shape_) != data_.size()) {
            throw DimensionError("shape " + shape_string(shape_) + " does not match " +
                                 std::to_string(data_.size()) + " elements");
        }
    }

    static Tensor filled(Shape shape, double value) {
        const std::size_t n = shape_size(shape);
        return Tensor(std::move(shape), std::vector<double>(n, value));
    }
    static Tensor zeros(Shape shape) { return filled(std::move(shape), 0.0); }
    static Tensor scalar(double value) { return Tensor({1}, {value}); }
    static Tensor vector(std::vector<double> values) {
        const std::size_t n = values.size();
        return Tensor({n}, std::move(values));
    }
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
        return Tensor({rows, cols}, std::move(values));
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t rows() const { return rank() == 2 ? shape_[0] : 1; }
    std::size_t cols() const { return shape_.back(); }

    std::span<const double> data() const noexcept { return data_; }
    std::span<double> data() noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    double operator[](std::size_t i) const { return data_[i]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
    double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }

    /// Value of a one-element tensor.
    double item() const {
        if (data_.size() != 1) throw DimensionError("item() on tensor of shape " + shape_string(shape_));
        return data_[0];
    }

    bool is_scalar() const noexcept { return data_.size() == 1; }

    Tensor reshaped(Shape shape) const {
        if (shape_size(shape) != data_.size()) {
            throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
        }
        return Tensor(std::move(shape), data_);
    }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

// Plain kernels. The tape-recorded ops in autodiff.hpp and the untaped model
// forward pass both call these, so taped and untaped values agree bit for bit.
namespace kernels {

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
    }
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
        throw DimensionError("matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
                             shape_string(b.shape()));
    }
    const std::size_t m = a.shape()[0], n = a.shape()[1], p = b.shape()[1];
    std::vector<double> out(m * p, 0.0);
    const auto ad = a.data();
    const auto bd = b.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t k = 0; k < n; ++k) {
            const double aik = ad[i * n + k];
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < p; ++j) out[i * p + j] += aik * bd[k * p + j];
        }
    }
    return Tensor({m, p}, std::move(out));
}

inline Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) throw DimensionError("transpose expects a matrix, got " + shape_string(a.shape()));
    const std::size_t r = a.shape()[0], c = a.shape()[1];
    std::vector<double> out(r * c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a.at(i, j);
    return Tensor({c, r}, std::move(out));
}

/// Adds a bias vector to every row of `a`. `a` may be a vector or a matrix.
inline Tensor add_bias(const Tensor& a, const Tensor& bias) {
    if (bias.rank() != 1 || bias.size() != a.cols()) {
        throw DimensionError("add_bias: bias " + shape_string(bias.shape()) + " does not fit " +
                             shape_string(a.shape()));
    }
    Tensor out = a;
    const std::size_t c = a.cols();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bias[i % c];
    return out;
}

inline Tensor relu(const Tensor& a) {
    Tensor out = a;
    for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
    return out;
}

template <class Op>
Tensor zip(const Tensor& a, const Tensor& b, const char* name, Op op) {
    require_same_shape(a, b, name);
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = op(a[i], b[i]);
    return out;
}

inline Tensor add(const Tensor& a, const Tensor& b) { return zip(a, b, "add", std::plus<>{}); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return zip(a, b, "sub", std::minus<>{}); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return zip(a, b, "mul", std::multiplies<>{}); }

inline Tensor scale(const Tensor& a, double s) {
    Tensor out = a;
    for (double& v : out.data()) v *= s;
    return out;
}

inline double sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    return s;
}

inline double l2_norm_squared(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v * v;
    return s;
}

inline double linf_norm(const Tensor& a) {
    double m = 0.0;
    for (double v : a.data()) m = std::max(m, std::abs(v));
    return m;
}

/// Index of the largest entry; ties resolve to the lowest index.
inline std::size_t argmax(std::span<const double> v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

/// Numerically stable softmax of one row.
inline std::vector<double> softmax(std::span<const double> logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        z += p[i];
    }
    for (double& v : p) v /= z;
    return p;
}

/// -log softmax(logits)[cls] with max subtraction.
inline double cross_entropy(std::span<const double> logits, std::size_t cls) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double v : logits) z += std::exp(v - mx);
    return std::log(z) + mx - logits[cls];
}

} // namespace kernels

} // namespace advlab
