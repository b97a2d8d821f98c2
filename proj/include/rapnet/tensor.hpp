#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "rapnet/common.hpp"

namespace rapnet {

// Dense 4-D array (batch, channel, height, width), row-major with w fastest.
template <typename T>
struct Tensor {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<T> data;

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_, T fill = T(0))
        : n(n_), c(c_), h(h_), w(w_) {
        if (n_ < 1 || c_ < 1 || h_ < 1 || w_ < 1)
            throw ShapeError("tensor shape components must be >= 1, got (" + shape_str() + ")");
        data.assign(static_cast<std::size_t>(size()), fill);
    }

    std::int64_t size() const {
        return static_cast<std::int64_t>(n) * c * h * w;
    }
    std::int64_t plane() const { return static_cast<std::int64_t>(h) * w; }

    T& at(int i, int j, int y, int x) {
        return data[((static_cast<std::int64_t>(i) * c + j) * h + y) * w + x];
    }
    T at(int i, int j, int y, int x) const {
        return data[((static_cast<std::int64_t>(i) * c + j) * h + y) * w + x];
    }

    T* row(int i, int j, int y) {
        return &data[((static_cast<std::int64_t>(i) * c + j) * h + y) * w];
    }
    const T* row(int i, int j, int y) const {
        return &data[((static_cast<std::int64_t>(i) * c + j) * h + y) * w];
    }

    bool same_shape(const Tensor& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }

    std::string shape_str() const {
        return std::to_string(n) + "x" + std::to_string(c) + "x" +
               std::to_string(h) + "x" + std::to_string(w);
    }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    static Tensor zeros_like(const Tensor& o) { return Tensor(o.n, o.c, o.h, o.w); }

    static Tensor full(int n, int c, int h, int w, T v) { return Tensor(n, c, h, w, v); }

    static Tensor random_uniform(int n, int c, int h, int w, Rng& rng, double lo, double hi) {
        Tensor t(n, c, h, w);
        for (auto& v : t.data) v = static_cast<T>(rng.uniform(lo, hi));
        return t;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.n = n; out.c = c; out.h = h; out.w = w;
        out.data.resize(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

}  // namespace rapnet
