#pragma once

// Named finite-difference checks shared by the CLI `gradcheck` command and
// the acceptance gate: every differentiable op, a full RAPConv layer, and an
// end-to-end micro network.

#include "rapnet/gradcheck.hpp"
#include "rapnet/network.hpp"

namespace rapnet {

struct GradCheckEntry {
    std::string name;
    double err = 0.0;
};

inline std::vector<GradCheckEntry> gradcheck_ops(std::uint64_t seed) {
    Rng rng(seed);
    TensorD x = TensorD::random_uniform(1, 2, 5, 5, rng, -1.0, 1.0);
    nudge_from_zero(x, 1e-3);
    TensorD x9 = TensorD::random_uniform(1, 18, 4, 4, rng, -1.0, 1.0);
    TensorD y = TensorD::random_uniform(1, 2, 5, 5, rng, -1.0, 1.0);
    TensorD w = TensorD::random_uniform(3, 2, 3, 3, rng, -1.0, 1.0);
    TensorD wg = TensorD::random_uniform(18, 1, 1, 1, rng, -1.0, 1.0);
    TensorD b3 = TensorD::random_uniform(3, 1, 1, 1, rng, -0.5, 0.5);
    TensorD slope(1, 1, 1, 1, 0.25);
    TensorD v(1, 2, 1, 1);
    v.data = {0.3, -0.7};
    TensorD mask = TensorD::random_uniform(1, 1, 5, 5, rng, 0.1, 0.9);
    TensorD target = TensorD::random_uniform(1, 2, 5, 5, rng, -1.0, 1.0);
    TensorD kern = TensorD::random_uniform(3, 2, 3, 3, rng, -1.0, 1.0);

    std::vector<GradCheckEntry> out;
    auto run = [&](const char* name, auto build, std::vector<TensorD> inputs) {
        out.push_back({name, grad_check(build, std::move(inputs))});
    };
    run("conv2d+bias",
        [](Tape<double>& t, const std::vector<int>& l) {
            ConvSpec s{2, 3, 3, 3, 1, 1, 1};
            return t.sum(t.conv2d(l[0], l[1], l[2], s));
        },
        {x, w, b3});
    run("conv2d-grouped",
        [](Tape<double>& t, const std::vector<int>& l) {
            ConvSpec s{2, 18, 1, 1, 1, 0, 2};
            return t.sum(t.sigmoid(t.conv2d(l[0], l[1], -1, s)));
        },
        {x, wg});
    run("avg_pool_same",
        [](Tape<double>& t, const std::vector<int>& l) {
            int p = t.avg_pool_same(l[0], 3);
            return t.sum(t.hadamard(p, p));
        },
        {x});
    run("global_avg_pool",
        [](Tape<double>& t, const std::vector<int>& l) {
            return t.sum(t.sigmoid(t.global_avg_pool(l[0])));
        },
        {x});
    run("sigmoid", [](Tape<double>& t, const std::vector<int>& l) { return t.sum(t.sigmoid(l[0])); },
        {x});
    run("relu",
        [](Tape<double>& t, const std::vector<int>& l) {
            int r = t.relu(l[0]);
            return t.sum(t.hadamard(r, r));
        },
        {x});
    run("prelu",
        [](Tape<double>& t, const std::vector<int>& l) {
            int p = t.prelu(l[0], l[1]);
            return t.sum(t.hadamard(p, p));
        },
        {x, slope});
    run("abs",
        [](Tape<double>& t, const std::vector<int>& l) {
            int a = t.abs(l[0]);
            return t.sum(t.hadamard(a, a));
        },
        {x});
    run("upsample_bilinear",
        [](Tape<double>& t, const std::vector<int>& l) {
            int u = t.upsample_bilinear(l[0], 2);
            return t.sum(t.hadamard(u, u));
        },
        {x});
    run("concat",
        [](Tape<double>& t, const std::vector<int>& l) {
            int c = t.concat(l[0], l[1]);
            return t.sum(t.hadamard(c, c));
        },
        {x, y});
    run("hadamard",
        [](Tape<double>& t, const std::vector<int>& l) { return t.sum(t.hadamard(l[0], l[1])); },
        {x, y});
    run("add",
        [](Tape<double>& t, const std::vector<int>& l) {
            int s = t.add(l[0], l[1]);
            return t.sum(t.hadamard(s, s));
        },
        {x, y});
    run("broadcast_hw",
        [](Tape<double>& t, const std::vector<int>& l) {
            return t.sum(t.hadamard(l[0], t.broadcast_hw(l[1], 5, 5)));
        },
        {x, v});
    run("mul_bcast_c",
        [](Tape<double>& t, const std::vector<int>& l) {
            int m = t.mul_bcast_c(l[0], l[1]);
            return t.sum(t.hadamard(m, m));
        },
        {x, mask});
    run("channel_stats",
        [](Tape<double>& t, const std::vector<int>& l) {
            int s = t.concat(t.channel_mean(l[0]), t.channel_max(l[0]));
            return t.sum(t.hadamard(s, s));
        },
        {x});
    run("adaptive_conv",
        [](Tape<double>& t, const std::vector<int>& l) {
            int outn = t.adaptive_conv(l[0], t.sigmoid(l[1]), l[2]);
            return t.sum(t.hadamard(outn, outn));
        },
        {TensorD(1, 2, 4, 4, 0.5), x9, kern});
    run("mse",
        [&target](Tape<double>& t, const std::vector<int>& l) {
            return t.mse(l[0], t.leaf(target));
        },
        {x});
    return out;
}

inline GradCheckEntry gradcheck_rapconv(std::uint64_t seed) {
    Rng rng(seed + 17);
    RapConvParams<double> p = RapConvParams<double>::init(2, 2, 4, rng);
    p.attn_weight = TensorD::random_uniform(18, 1, 1, 1, rng, -0.5, 0.5);
    p.attn_bias = TensorD::random_uniform(1, 18, 1, 1, rng, -0.5, 0.5);
    p.ghbm_w2 = TensorD::random_uniform(2, 4, 1, 1, rng, -0.5, 0.5);
    TensorD x = TensorD::random_uniform(1, 2, 5, 5, rng, -1.0, 1.0);
    nudge_from_zero(x, 1e-3);
    const double err = grad_check(
        [](Tape<double>& t, const std::vector<int>& l) {
            RapConvNodes n;
            n.in_c = 2; n.out_c = 2; n.hidden = 4; n.adaptive = true;
            n.base = l[1]; n.attn_w = l[2]; n.attn_b = l[3];
            n.gw1 = l[4]; n.gb1 = l[5]; n.gw2 = l[6]; n.gb2 = l[7];
            int out = rapconv_forward(t, l[0], n);
            return t.sum(t.hadamard(out, out));
        },
        {x, p.base_kernel, p.attn_weight, p.attn_bias, p.ghbm_w1, p.ghbm_b1, p.ghbm_w2, p.ghbm_b2});
    return {"rapconv-layer", err};
}

inline GradCheckEntry gradcheck_micro_network(std::uint64_t seed) {
    Hyper hy;
    hy.bands = 2;
    hy.features = 8;
    hy.ratio = 2;
    hy.ghbm_hidden = 4;
    RapNetParams<double> p = RapNetParams<float>::init(hy, seed).cast<double>();
    TensorD pan, ms, target;

    // central differences sample f at +/- eps, so a relu/prelu/abs input within
    // ~eps of its kink poisons the check even though the gradient is right.
    // redraw the random stir until every kinked activation has clearance.
    for (std::uint64_t attempt = 0;; ++attempt) {
        if (attempt == 64) throw NumericError("gradcheck: no well-conditioned draw found");
        Rng rng(seed + 5 + 1009 * attempt);
        p.for_each_param([&](const std::string&, TensorD& t) {
            for (auto& vv : t.data)
                if (vv == 0.0) vv = rng.uniform(-0.3, 0.3);
        });
        pan = TensorD::random_uniform(1, 1, 8, 8, rng, 0.05, 0.95);
        ms = TensorD::random_uniform(1, 2, 4, 4, rng, 0.05, 0.95);
        target = TensorD::random_uniform(1, 2, 8, 8, rng, 0.0, 1.0);
        Tape<double> probe;
        BoundNet b = bind_network(probe, p, false);
        rapnet_forward(probe, probe.leaf(pan), probe.leaf(ms), b);
        if (probe.kink_clearance() > 1e-3) break;
        // zero-initialized pieces were overwritten above; reset them for the redraw
        RapNetParams<double> fresh = RapNetParams<float>::init(hy, seed).cast<double>();
        p = fresh;
    }

    std::vector<TensorD> inputs;
    p.for_each_param([&](const std::string&, TensorD& t) { inputs.push_back(t); });
    const double err = grad_check(
        [&](Tape<double>& t, const std::vector<int>& l) {
            BoundNet net;
            net.hyper = hy;
            std::size_t k = 0;
            net.esam_w = l[k++]; net.esam_b = l[k++];
            net.head_w = l[k++]; net.head_b = l[k++];
            for (auto& blk : net.blocks) {
                auto bind_layer = [&](RapConvNodes& nd) {
                    nd.in_c = hy.features; nd.out_c = hy.features; nd.hidden = hy.ghbm_hidden;
                    nd.adaptive = true;
                    nd.base = l[k++]; nd.attn_w = l[k++]; nd.attn_b = l[k++];
                    nd.gw1 = l[k++]; nd.gb1 = l[k++]; nd.gw2 = l[k++]; nd.gb2 = l[k++];
                };
                bind_layer(blk.conv1);
                bind_layer(blk.conv2);
                blk.prelu = l[k++];
            }
            net.tail_w = l[k++]; net.tail_b = l[k++];
            net.proj_w = l[k++]; net.proj_b = l[k++];
            net.gate1_w = l[k++]; net.gate1_b = l[k++];
            net.gate2_w = l[k++]; net.gate2_b = l[k++];
            int out = rapnet_forward(t, t.leaf(pan), t.leaf(ms), net);
            return t.mse(out, t.leaf(target));
        },
        inputs);
    return {"micro-network", err};
}

}  // namespace rapnet
