#pragma once

#include <array>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "rapnet/rapconv.hpp"

namespace rapnet {

template <typename T>
struct ConvParams {
    Tensor<T> w;  // (out, in, kh, kw)
    Tensor<T> b;  // (1, out, 1, 1)

    static ConvParams init(int in_c, int out_c, int k, Rng& rng) {
        ConvParams p;
        const double lim = std::sqrt(6.0 / (static_cast<double>(in_c) * k * k));
        p.w = Tensor<T>::random_uniform(out_c, in_c, k, k, rng, -lim, lim);
        p.b = Tensor<T>(1, out_c, 1, 1);
        return p;
    }
};

template <typename T>
struct EsamParams {
    ConvParams<T> gate;  // 2 -> 1, 7x7
};

template <typename T>
struct DffParams {
    ConvParams<T> proj;   // F -> S, 1x1
    ConvParams<T> gate1;  // 2S -> S, 1x1
    ConvParams<T> gate2;  // S -> S, 1x1
};

struct Hyper {
    int bands = 8;        // S
    int features = 32;    // F
    int ratio = 4;        // PAN/MS resolution ratio, power of 2
    int ghbm_hidden = 0;  // 0 -> max(F/2, 4)
    bool ablate_rapconv = false;

    static constexpr int kNumBlocks = 4;

    void validate() const {
        if (bands < 1 || features < 1) throw ShapeError("hyper: bands/features must be >= 1");
        if (ratio < 1 || (ratio & (ratio - 1)) != 0)
            throw ShapeError("hyper: ratio must be a positive power of 2, got " + std::to_string(ratio));
    }
    int hidden() const { return ghbm_hidden > 0 ? ghbm_hidden : RapConvParams<float>::default_hidden(features); }
};

template <typename T>
struct ResBlockParams {
    RapConvParams<T> conv1, conv2;
    Tensor<T> prelu_slope;  // (1,1,1,1)
};

template <typename T>
struct RapNetParams {
    Hyper hyper;
    EsamParams<T> esam;
    ConvParams<T> head;  // (S+1) -> F, 3x3
    std::array<ResBlockParams<T>, Hyper::kNumBlocks> blocks;
    ConvParams<T> tail;  // F -> F, 3x3
    DffParams<T> dff;

    static RapNetParams init(const Hyper& hy, std::uint64_t seed) {
        hy.validate();
        Rng rng(seed);
        RapNetParams p;
        p.hyper = hy;
        const int S = hy.bands, F = hy.features, M = hy.hidden();
        p.esam.gate = ConvParams<T>::init(2, 1, 7, rng);
        p.head = ConvParams<T>::init(S + 1, F, 3, rng);
        for (auto& blk : p.blocks) {
            blk.conv1 = RapConvParams<T>::init(F, F, M, rng, !hy.ablate_rapconv);
            blk.conv2 = RapConvParams<T>::init(F, F, M, rng, !hy.ablate_rapconv);
            blk.prelu_slope = Tensor<T>(1, 1, 1, 1, T(0.25));
        }
        p.tail = ConvParams<T>::init(F, F, 3, rng);
        // zero detail projection: the untrained network reproduces the
        // bilinear spectral base exactly instead of injecting init noise
        p.dff.proj = ConvParams<T>::init(F, S, 1, rng);
        p.dff.proj.w = Tensor<T>(S, F, 1, 1);
        p.dff.gate1 = ConvParams<T>::init(2 * S, S, 1, rng);
        p.dff.gate2 = ConvParams<T>::init(S, S, 1, rng);
        return p;
    }

    // Fixed traversal order: this is the checkpoint and optimizer-state order.
    template <typename Fn>
    void for_each_param(Fn&& fn) {
        fn("esam.gate.w", esam.gate.w);
        fn("esam.gate.b", esam.gate.b);
        fn("head.w", head.w);
        fn("head.b", head.b);
        for (int i = 0; i < Hyper::kNumBlocks; ++i) {
            const std::string pre = "block" + std::to_string(i);
            blocks[static_cast<std::size_t>(i)].conv1.for_each_param(pre + ".conv1", fn);
            blocks[static_cast<std::size_t>(i)].conv2.for_each_param(pre + ".conv2", fn);
            fn(pre + ".prelu", blocks[static_cast<std::size_t>(i)].prelu_slope);
        }
        fn("tail.w", tail.w);
        fn("tail.b", tail.b);
        fn("dff.proj.w", dff.proj.w);
        fn("dff.proj.b", dff.proj.b);
        fn("dff.gate1.w", dff.gate1.w);
        fn("dff.gate1.b", dff.gate1.b);
        fn("dff.gate2.w", dff.gate2.w);
        fn("dff.gate2.b", dff.gate2.b);
    }

    std::int64_t param_count() {
        std::int64_t n = 0;
        for_each_param([&](const std::string&, Tensor<T>& t) { n += t.size(); });
        return n;
    }

    template <typename U>
    RapNetParams<U> cast() {
        RapNetParams<U> out;
        out.hyper = hyper;
        // mirror structure, then copy by traversal order
        out.esam.gate.w = esam.gate.w.template cast<U>();
        out.esam.gate.b = esam.gate.b.template cast<U>();
        out.head.w = head.w.template cast<U>();
        out.head.b = head.b.template cast<U>();
        for (int i = 0; i < Hyper::kNumBlocks; ++i) {
            auto& src = blocks[static_cast<std::size_t>(i)];
            auto& dst = out.blocks[static_cast<std::size_t>(i)];
            auto copy_layer = [](RapConvParams<T>& a, RapConvParams<U>& b) {
                b.in_c = a.in_c; b.out_c = a.out_c; b.hidden = a.hidden; b.adaptive = a.adaptive;
                b.base_kernel = a.base_kernel.template cast<U>();
                if (a.adaptive) {
                    b.attn_weight = a.attn_weight.template cast<U>();
                    b.attn_bias = a.attn_bias.template cast<U>();
                    b.ghbm_w1 = a.ghbm_w1.template cast<U>();
                    b.ghbm_b1 = a.ghbm_b1.template cast<U>();
                    b.ghbm_w2 = a.ghbm_w2.template cast<U>();
                    b.ghbm_b2 = a.ghbm_b2.template cast<U>();
                }
            };
            copy_layer(src.conv1, dst.conv1);
            copy_layer(src.conv2, dst.conv2);
            dst.prelu_slope = src.prelu_slope.template cast<U>();
        }
        out.tail.w = tail.w.template cast<U>();
        out.tail.b = tail.b.template cast<U>();
        out.dff.proj.w = dff.proj.w.template cast<U>();
        out.dff.proj.b = dff.proj.b.template cast<U>();
        out.dff.gate1.w = dff.gate1.w.template cast<U>();
        out.dff.gate1.b = dff.gate1.b.template cast<U>();
        out.dff.gate2.w = dff.gate2.w.template cast<U>();
        out.dff.gate2.b = dff.gate2.b.template cast<U>();
        return out;
    }
};

// ---- tape-bound network ----

struct BoundNet {
    int esam_w = -1, esam_b = -1;
    int head_w = -1, head_b = -1;
    struct Block {
        RapConvNodes conv1, conv2;
        int prelu = -1;
    };
    std::array<Block, Hyper::kNumBlocks> blocks;
    int tail_w = -1, tail_b = -1;
    int proj_w = -1, proj_b = -1;
    int gate1_w = -1, gate1_b = -1;
    int gate2_w = -1, gate2_b = -1;
    Hyper hyper;
};

template <typename T>
BoundNet bind_network(Tape<T>& t, RapNetParams<T>& p, bool requires_grad) {
    BoundNet b;
    b.hyper = p.hyper;
    b.esam_w = t.leaf(p.esam.gate.w, requires_grad);
    b.esam_b = t.leaf(p.esam.gate.b, requires_grad);
    b.head_w = t.leaf(p.head.w, requires_grad);
    b.head_b = t.leaf(p.head.b, requires_grad);
    for (int i = 0; i < Hyper::kNumBlocks; ++i) {
        auto& src = p.blocks[static_cast<std::size_t>(i)];
        auto& dst = b.blocks[static_cast<std::size_t>(i)];
        dst.conv1 = bind_rapconv(t, src.conv1, requires_grad);
        dst.conv2 = bind_rapconv(t, src.conv2, requires_grad);
        dst.prelu = t.leaf(src.prelu_slope, requires_grad);
    }
    b.tail_w = t.leaf(p.tail.w, requires_grad);
    b.tail_b = t.leaf(p.tail.b, requires_grad);
    b.proj_w = t.leaf(p.dff.proj.w, requires_grad);
    b.proj_b = t.leaf(p.dff.proj.b, requires_grad);
    b.gate1_w = t.leaf(p.dff.gate1.w, requires_grad);
    b.gate1_b = t.leaf(p.dff.gate1.b, requires_grad);
    b.gate2_w = t.leaf(p.dff.gate2.w, requires_grad);
    b.gate2_b = t.leaf(p.dff.gate2.b, requires_grad);
    return b;
}

// Leaf ids in the same order as RapNetParams::for_each_param, so tape
// gradients can be zipped with the parameter traversal.
inline void collect_leaf_ids(const BoundNet& b, std::vector<int>& out) {
    out.clear();
    out.push_back(b.esam_w);
    out.push_back(b.esam_b);
    out.push_back(b.head_w);
    out.push_back(b.head_b);
    auto push_layer = [&](const RapConvNodes& l) {
        out.push_back(l.base);
        if (!l.adaptive) return;
        out.push_back(l.attn_w);
        out.push_back(l.attn_b);
        out.push_back(l.gw1);
        out.push_back(l.gb1);
        out.push_back(l.gw2);
        out.push_back(l.gb2);
    };
    for (const auto& blk : b.blocks) {
        push_layer(blk.conv1);
        push_layer(blk.conv2);
        out.push_back(blk.prelu);
    }
    out.push_back(b.tail_w);
    out.push_back(b.tail_b);
    out.push_back(b.proj_w);
    out.push_back(b.proj_b);
    out.push_back(b.gate1_w);
    out.push_back(b.gate1_b);
    out.push_back(b.gate2_w);
    out.push_back(b.gate2_b);
}

// Edge spatial attention: gates the input by a sigmoid mask computed from
// channel-pooled Laplacian high-pass statistics. Channel-agnostic, so the
// same parameters serve the 1-band PAN and the S-band MS.
template <typename T>
int esam_forward(Tape<T>& t, int x, int gate_w, int gate_b) {
    const int xc = t.value(x).c;  // copy: tape pushes below may reallocate nodes
    // fixed per-channel 3x3 Laplacian, center 8 / neighbors -1, scaled by 1/8
    Tensor<T> lap(xc, 1, 3, 3, T(-0.125));
    for (int ci = 0; ci < xc; ++ci) lap.at(ci, 0, 1, 1) = T(1);
    const int lap_node = t.leaf(std::move(lap));
    ConvSpec hp_spec{xc, xc, 3, 3, 1, 1, xc};
    const int hp = t.abs(t.conv2d(x, lap_node, -1, hp_spec));
    const int stats = t.concat(t.channel_mean(hp), t.channel_max(hp));
    ConvSpec gate_spec{2, 1, 7, 7, 1, 3, 1};
    const int mask = t.sigmoid(t.conv2d(stats, gate_w, gate_b, gate_spec));
    return t.add(x, t.mul_bcast_c(x, mask));
}

// Gated detail injection on the upsampled-MS spectral base.
template <typename T>
int pan_dff(Tape<T>& t, int feat, int ms_up, const BoundNet& p, bool force_gate_ones = false) {
    const int mn = t.value(ms_up).n, mh = t.value(ms_up).h, mw = t.value(ms_up).w;
    if (t.value(feat).h != mh || t.value(feat).w != mw)
        throw ShapeError("pan_dff: spatial mismatch " + t.value(feat).shape_str() + " vs " +
                         t.value(ms_up).shape_str());
    const int S = p.hyper.bands;
    ConvSpec proj_spec{p.hyper.features, S, 1, 1, 1, 0, 1};
    const int d = t.conv2d(feat, p.proj_w, p.proj_b, proj_spec);
    int g;
    if (force_gate_ones) {
        g = t.leaf(Tensor<T>(mn, S, mh, mw, T(1)));
    } else {
        ConvSpec g1{2 * S, S, 1, 1, 1, 0, 1};
        ConvSpec g2{S, S, 1, 1, 1, 0, 1};
        g = t.sigmoid(t.conv2d(t.relu(t.conv2d(t.concat(d, ms_up), p.gate1_w, p.gate1_b, g1)),
                               p.gate2_w, p.gate2_b, g2));
    }
    return t.add(ms_up, t.hadamard(g, d));
}

// Full forward graph: ESAM on both inputs, backbone over the channel merge,
// then PAN-DFF fusion against the raw upsampled MS.
template <typename T>
int rapnet_forward(Tape<T>& t, int pan, int ms, const BoundNet& p) {
    // validation only: node references are not held past the first tape push
    {
        const Tensor<T>& pv = t.value(pan);
        const Tensor<T>& mv = t.value(ms);
        const int r0 = p.hyper.ratio;
        if (pv.c != 1)
            throw ShapeError("rapnet: PAN must have 1 channel, got " + std::to_string(pv.c));
        if (mv.c != p.hyper.bands)
            throw ShapeError("rapnet: MS has " + std::to_string(mv.c) + " bands, network expects " +
                             std::to_string(p.hyper.bands));
        if (pv.h != mv.h * r0 || pv.w != mv.w * r0)
            throw ShapeError("rapnet: PAN " + pv.shape_str() + " is not ratio " + std::to_string(r0) +
                             " times MS " + mv.shape_str());
    }
    const int r = p.hyper.ratio;

    const int pan_e = esam_forward(t, pan, p.esam_w, p.esam_b);
    const int ms_e = esam_forward(t, ms, p.esam_w, p.esam_b);
    const int ms_up = t.upsample_bilinear(ms_e, r);
    const int ms_up_raw = t.upsample_bilinear(ms, r);

    const int S = p.hyper.bands, F = p.hyper.features;
    ConvSpec head_spec{S + 1, F, 3, 3, 1, 1, 1};
    int feat = t.conv2d(t.concat(pan_e, ms_up), p.head_w, p.head_b, head_spec);
    const RapConvMode mode = RapConvMode::Adaptive;  // ablation is baked into params
    for (const auto& blk : p.blocks)
        feat = rap_resblock_forward(t, feat, blk.conv1, blk.conv2, blk.prelu, mode);
    ConvSpec tail_spec{F, F, 3, 3, 1, 1, 1};
    feat = t.conv2d(feat, p.tail_w, p.tail_b, tail_spec);
    return pan_dff(t, feat, ms_up_raw, p);
}

// Convenience inference entry (no gradients).
template <typename T>
Tensor<T> rapnet_infer(RapNetParams<T>& params, const Tensor<T>& pan, const Tensor<T>& ms) {
    Tape<T> tape;
    BoundNet b = bind_network(tape, params, false);
    const int out = rapnet_forward(tape, tape.leaf(pan), tape.leaf(ms), b);
    return tape.value(out);
}

// ---- checkpoint format ----
// magic "RAPN", version u16, hyper block, then parameter tensors in
// for_each_param order, each as 4 x u32 shape + little-endian f32 payload.

namespace detail {
inline void put_u16(std::ostream& os, std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>(v >> 8)};
    os.write(reinterpret_cast<const char*>(b), 2);
}
inline void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}
inline std::uint16_t get_u16(std::istream& is) {
    unsigned char b[2];
    is.read(reinterpret_cast<char*>(b), 2);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}
inline std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}
}  // namespace detail

inline constexpr std::uint16_t kCheckpointVersion = 1;

void save_checkpoint(RapNetParams<float>& params, const std::string& path);
RapNetParams<float> load_checkpoint(const std::string& path);

}  // namespace rapnet
