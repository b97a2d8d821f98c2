#pragma once

#include "rapnet/autodiff.hpp"

namespace rapnet {

enum class RapConvMode { Adaptive, DegenerateTest };

// Learnable state of one RAPConv layer (3x3 adaptive kernel only).
// When `adaptive` is false the layer is a plain 3x3 convolution over the
// base kernel (the ablation configuration) and the other tensors are unused.
template <typename T>
struct RapConvParams {
    int in_c = 0, out_c = 0, hidden = 0;
    bool adaptive = true;
    Tensor<T> base_kernel;                 // (P, C, 3, 3)
    Tensor<T> attn_weight, attn_bias;      // (9C, 1, 1, 1) grouped by C; bias (1, 9C, 1, 1)
    Tensor<T> ghbm_w1, ghbm_b1;            // (M, C, 1, 1), (1, M, 1, 1)
    Tensor<T> ghbm_w2, ghbm_b2;            // (P, M, 1, 1), (1, P, 1, 1)

    static int default_hidden(int c) { return std::max(c / 2, 4); }

    // He-uniform base kernel; attention zero-initialized so the initial field
    // is sigmoid(0) = 0.5 everywhere; GHBM second layer zero so the initial
    // bias vanishes.
    static RapConvParams init(int c, int p, int hidden, Rng& rng, bool adaptive = true) {
        RapConvParams out;
        out.in_c = c;
        out.out_c = p;
        out.hidden = hidden;
        out.adaptive = adaptive;
        const double lim = std::sqrt(6.0 / (9.0 * c));
        out.base_kernel = Tensor<T>::random_uniform(p, c, 3, 3, rng, -lim, lim);
        if (adaptive) {
            out.attn_weight = Tensor<T>(9 * c, 1, 1, 1);
            out.attn_bias = Tensor<T>(1, 9 * c, 1, 1);
            const double lim1 = std::sqrt(6.0 / c);
            out.ghbm_w1 = Tensor<T>::random_uniform(hidden, c, 1, 1, rng, -lim1, lim1);
            out.ghbm_b1 = Tensor<T>(1, hidden, 1, 1);
            out.ghbm_w2 = Tensor<T>(p, hidden, 1, 1);
            out.ghbm_b2 = Tensor<T>(1, p, 1, 1);
        }
        return out;
    }

    template <typename Fn>
    void for_each_param(const std::string& prefix, Fn&& fn) {
        fn(prefix + ".base_kernel", base_kernel);
        if (!adaptive) return;
        fn(prefix + ".attn_weight", attn_weight);
        fn(prefix + ".attn_bias", attn_bias);
        fn(prefix + ".ghbm_w1", ghbm_w1);
        fn(prefix + ".ghbm_b1", ghbm_b1);
        fn(prefix + ".ghbm_w2", ghbm_w2);
        fn(prefix + ".ghbm_b2", ghbm_b2);
    }
};

// Tape-bound leaf ids for one layer.
struct RapConvNodes {
    int base = -1, attn_w = -1, attn_b = -1;
    int gw1 = -1, gb1 = -1, gw2 = -1, gb2 = -1;
    int in_c = 0, out_c = 0, hidden = 0;
    bool adaptive = true;
};

template <typename T>
RapConvNodes bind_rapconv(Tape<T>& t, RapConvParams<T>& p, bool requires_grad) {
    RapConvNodes n;
    n.in_c = p.in_c;
    n.out_c = p.out_c;
    n.hidden = p.hidden;
    n.adaptive = p.adaptive;
    n.base = t.leaf(p.base_kernel, requires_grad);
    if (p.adaptive) {
        n.attn_w = t.leaf(p.attn_weight, requires_grad);
        n.attn_b = t.leaf(p.attn_bias, requires_grad);
        n.gw1 = t.leaf(p.ghbm_w1, requires_grad);
        n.gb1 = t.leaf(p.ghbm_b1, requires_grad);
        n.gw2 = t.leaf(p.ghbm_w2, requires_grad);
        n.gb2 = t.leaf(p.ghbm_b2, requires_grad);
    }
    return n;
}

// GHBM: global pool then a 1x1 bottleneck (w1 -> ReLU -> w2); output (n, P, 1, 1).
template <typename T>
int ghbm_forward(Tape<T>& t, int x, const RapConvNodes& p) {
    const int pooled = t.global_avg_pool(x);
    ConvSpec s1{p.in_c, p.hidden, 1, 1, 1, 0, 1};
    ConvSpec s2{p.hidden, p.out_c, 1, 1, 1, 0, 1};
    return t.conv2d(t.relu(t.conv2d(pooled, p.gw1, p.gb1, s1)), p.gw2, p.gb2, s2);
}

// Receptive-field adaptive convolution with global harmonic bias.
template <typename T>
int rapconv_forward(Tape<T>& t, int x, const RapConvNodes& p,
                    RapConvMode mode = RapConvMode::Adaptive) {
    // copy dims now: growing the tape below may reallocate node storage
    const int xn = t.value(x).n, xc = t.value(x).c, xh = t.value(x).h, xw = t.value(x).w;
    if (xc != p.in_c)
        throw ShapeError("rapconv: input has " + std::to_string(xc) + " channels, layer expects " +
                         std::to_string(p.in_c));
    if (!p.adaptive) {  // ablated layer: plain 3x3 conv, no bias
        ConvSpec s{p.in_c, p.out_c, 3, 3, 1, 1, 1};
        return t.conv2d(x, p.base, -1, s);
    }
    int y;
    if (mode == RapConvMode::DegenerateTest) {
        const int ones = t.leaf(Tensor<T>(xn, 9 * p.in_c, xh, xw, T(1)));
        y = t.adaptive_conv(x, ones, p.base);
        return y;  // attention == 1, bias == 0: exactly conv2d(x, base, pad 1)
    }
    ConvSpec attn_spec{p.in_c, 9 * p.in_c, 1, 1, 1, 0, p.in_c};
    const int attn = t.sigmoid(t.conv2d(t.avg_pool_same(x, 3), p.attn_w, p.attn_b, attn_spec));
    y = t.adaptive_conv(x, attn, p.base);
    const int bias = ghbm_forward(t, x, p);
    return t.add(y, t.broadcast_hw(bias, xh, xw));
}

// rapconv2(prelu(rapconv1(x))) + x, all widths equal.
template <typename T>
int rap_resblock_forward(Tape<T>& t, int x, const RapConvNodes& a, const RapConvNodes& b,
                         int prelu_slope, RapConvMode mode = RapConvMode::Adaptive) {
    if (a.in_c != a.out_c || b.in_c != b.out_c || a.out_c != b.in_c)
        throw ShapeError("rap_resblock: layers must be square and matching (got " +
                         std::to_string(a.in_c) + "->" + std::to_string(a.out_c) + ", " +
                         std::to_string(b.in_c) + "->" + std::to_string(b.out_c) + ")");
    const int mid = t.prelu(rapconv_forward(t, x, a, mode), prelu_slope);
    return t.add(rapconv_forward(t, mid, b, mode), x);
}

}  // namespace rapnet
