#pragma once

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <vector>

#include "crwkv/common.hpp"

namespace crwkv {

// Dense row-major N-d array. Feature maps are (B, C, H, W); token sequences
// are (B, T, C); weights use whatever rank the op defines.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::int64_t> shape) : shape_(std::move(shape)) {
        check_shape();
        data_.assign(static_cast<std::size_t>(count(shape_)), T{0});
    }

    Tensor(std::vector<std::int64_t> shape, std::vector<T> values) : shape_(std::move(shape)) {
        check_shape();
        if (static_cast<std::int64_t>(values.size()) != count(shape_))
            throw ShapeError("value count " + std::to_string(values.size()) +
                             " does not match shape " + shape_str());
        data_.assign(values.begin(), values.end());
    }

    static Tensor zeros(std::vector<std::int64_t> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<std::int64_t> shape, T value) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), value);
        return t;
    }

    static Tensor ones(std::vector<std::int64_t> shape) { return full(std::move(shape), T{1}); }

    static Tensor uniform(std::vector<std::int64_t> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
        Tensor t(std::move(shape));
        for (auto& v : t.data_) v = static_cast<T>(rng.uniform(lo, hi));
        return t;
    }

    static Tensor randn(std::vector<std::int64_t> shape, Rng& rng, double stddev = 1.0) {
        Tensor t(std::move(shape));
        for (auto& v : t.data_) v = static_cast<T>(stddev * rng.normal());
        return t;
    }

    bool empty() const { return data_.empty(); }
    int ndim() const { return static_cast<int>(shape_.size()); }
    const std::vector<std::int64_t>& shape() const { return shape_; }
    std::int64_t size(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    // (B, C, H, W)
    T& at4(std::int64_t b, std::int64_t c, std::int64_t y, std::int64_t x) {
        return data_[static_cast<std::size_t>(((b * shape_[1] + c) * shape_[2] + y) * shape_[3] + x)];
    }
    const T& at4(std::int64_t b, std::int64_t c, std::int64_t y, std::int64_t x) const {
        return data_[static_cast<std::size_t>(((b * shape_[1] + c) * shape_[2] + y) * shape_[3] + x)];
    }

    // (B, T, C)
    T& at3(std::int64_t b, std::int64_t t, std::int64_t c) {
        return data_[static_cast<std::size_t>((b * shape_[1] + t) * shape_[2] + c)];
    }
    const T& at3(std::int64_t b, std::int64_t t, std::int64_t c) const {
        return data_[static_cast<std::size_t>((b * shape_[1] + t) * shape_[2] + c)];
    }

    T& at2(std::int64_t i, std::int64_t j) { return data_[static_cast<std::size_t>(i * shape_[1] + j)]; }
    const T& at2(std::int64_t i, std::int64_t j) const {
        return data_[static_cast<std::size_t>(i * shape_[1] + j)];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    std::string shape_str() const {
        std::ostringstream os;
        os << "(";
        for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
        os << ")";
        return os.str();
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    Tensor& operator+=(const Tensor& o) {
        require_same(o, "+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    Tensor& operator-=(const Tensor& o) {
        require_same(o, "-=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }
    Tensor& operator*=(T s) {
        for (auto& v : data_) v *= s;
        return *this;
    }

    friend Tensor operator+(Tensor a, const Tensor& b) { a += b; return a; }
    friend Tensor operator-(Tensor a, const Tensor& b) { a -= b; return a; }
    friend Tensor operator*(Tensor a, T s) { a *= s; return a; }

    bool all_finite() const {
        for (const auto& v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    T max_abs() const {
        T m{0};
        for (const auto& v : data_) m = std::max(m, static_cast<T>(std::abs(static_cast<double>(v))));
        return m;
    }

    double sum() const {
        double s = 0.0;
        for (const auto& v : data_) s += static_cast<double>(v);
        return s;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(shape_);
        for (std::int64_t i = 0; i < numel(); ++i) out[i] = static_cast<U>(data_[static_cast<std::size_t>(i)]);
        return out;
    }

    static std::int64_t count(const std::vector<std::int64_t>& s) {
        std::int64_t n = 1;
        for (auto d : s) n *= d;
        return s.empty() ? 0 : n;
    }

private:
    void check_shape() const {
        if (shape_.empty()) throw ShapeError("rank-0 tensors are not supported");
        for (auto d : shape_)
            if (d <= 0) throw ShapeError("non-positive dimension in " + shape_str());
    }
    void require_same(const Tensor& o, const char* op) const {
        if (!same_shape(o))
            throw ShapeError(std::string(op) + " requires equal shapes, got " + shape_str() +
                             " and " + o.shape_str());
    }

    std::vector<std::int64_t> shape_;
    std::vector<T, TrackingAllocator<T>> data_;
};

// paired real/imaginary planes, each (B, C, H, W)
template <typename T>
struct ComplexMap {
    Tensor<T> re;
    Tensor<T> im;
};

}  // namespace crwkv
