#pragma once

// Independent brute-force references used as oracles. These stay loop-naive
// on purpose and must not share code with the library implementations.

#include <algorithm>
#include <cmath>
#include <type_traits>
#include <vector>

#include "rapnet/tensor.hpp"

namespace oracle {

using rapnet::Tensor;

// plain 6-nested-loop convolution, zero padding
template <typename T>
Tensor<T> conv2d_naive(const Tensor<T>& x, const Tensor<T>& w,
                       const Tensor<std::type_identity_t<T>>* bias, int stride, int pad,
                       int groups) {
    const int cg = x.c / groups;
    const int pg = w.n / groups;
    const int h_out = (x.h + 2 * pad - w.h) / stride + 1;
    const int w_out = (x.w + 2 * pad - w.w) / stride + 1;
    Tensor<T> out(x.n, w.n, h_out, w_out);
    for (int n = 0; n < x.n; ++n)
        for (int p = 0; p < w.n; ++p)
            for (int oy = 0; oy < h_out; ++oy)
                for (int ox = 0; ox < w_out; ++ox) {
                    double acc = bias ? static_cast<double>(bias->data[static_cast<std::size_t>(p)]) : 0.0;
                    for (int ci = 0; ci < cg; ++ci)
                        for (int ky = 0; ky < w.h; ++ky)
                            for (int kx = 0; kx < w.w; ++kx) {
                                const int iy = oy * stride + ky - pad;
                                const int ix = ox * stride + kx - pad;
                                if (iy < 0 || iy >= x.h || ix < 0 || ix >= x.w) continue;
                                acc += static_cast<double>(w.at(p, ci, ky, kx)) *
                                       x.at(n, (p / pg) * cg + ci, iy, ix);
                            }
                    out.at(n, p, oy, ox) = static_cast<T>(acc);
                }
    return out;
}

template <typename T>
Tensor<T> avg_pool_naive(const Tensor<T>& x, int k) {
    const int r = k / 2;
    Tensor<T> out = Tensor<T>::zeros_like(x);
    for (int n = 0; n < x.n; ++n)
        for (int c = 0; c < x.c; ++c)
            for (int y = 0; y < x.h; ++y)
                for (int xx = 0; xx < x.w; ++xx) {
                    double acc = 0.0;
                    int cnt = 0;
                    for (int dy = -r; dy <= r; ++dy)
                        for (int dx = -r; dx <= r; ++dx) {
                            const int iy = y + dy, ix = xx + dx;
                            if (iy < 0 || iy >= x.h || ix < 0 || ix >= x.w) continue;
                            acc += x.at(n, c, iy, ix);
                            ++cnt;
                        }
                    out.at(n, c, y, xx) = static_cast<T>(acc / cnt);
                }
    return out;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        worst = std::max(worst, std::abs(static_cast<double>(a.data[i]) - b.data[i]));
    return worst;
}

// plain-UIQI reimplementation straight from the formula, block-averaged with
// the same unbiased variance scaling the library documents
inline double uiqi_naive(const rapnet::TensorD& a, const rapnet::TensorD& b, int block, int shift) {
    double total = 0.0;
    int count = 0;
    auto starts = [&](int len) {
        std::vector<int> s;
        for (int v = 0; v + block <= len; v += shift) s.push_back(v);
        if (s.empty() || s.back() + block < len) s.push_back(len - block);
        return s;
    };
    for (int y0 : starts(a.h))
        for (int x0 : starts(a.w)) {
            double ma = 0.0, mb = 0.0;
            const double n = static_cast<double>(block) * block;
            for (int y = y0; y < y0 + block; ++y)
                for (int x = x0; x < x0 + block; ++x) {
                    ma += a.at(0, 0, y, x);
                    mb += b.at(0, 0, y, x);
                }
            ma /= n;
            mb /= n;
            double va = 0.0, vb = 0.0, cov = 0.0;
            for (int y = y0; y < y0 + block; ++y)
                for (int x = x0; x < x0 + block; ++x) {
                    va += (a.at(0, 0, y, x) - ma) * (a.at(0, 0, y, x) - ma);
                    vb += (b.at(0, 0, y, x) - mb) * (b.at(0, 0, y, x) - mb);
                    cov += (a.at(0, 0, y, x) - ma) * (b.at(0, 0, y, x) - mb);
                }
            va /= n - 1.0;
            vb /= n - 1.0;
            cov /= n - 1.0;
            double q;
            if (va + vb == 0.0) {
                q = ma == mb ? 1.0 : 0.0;
            } else {
                const double lum = (ma * ma + mb * mb) == 0.0
                                       ? 1.0
                                       : 2.0 * ma * mb / (ma * ma + mb * mb);
                q = cov * 2.0 / (va + vb) * lum;
            }
            total += q;
            ++count;
        }
    return total / count;
}

}  // namespace oracle
