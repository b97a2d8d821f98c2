#include "doctest.h"

#include "oracles.hpp"
#include "rapnet/gradcheck.hpp"
#include "rapnet/rapconv.hpp"

using namespace rapnet;

TEST_CASE("backward of sum(x) is all ones") {
    Rng rng(3);
    Tape<double> t;
    int x = t.leaf(TensorD::random_uniform(1, 2, 3, 3, rng, -1.0, 1.0), true);
    t.backward(t.sum(x));
    for (double g : t.grad(x).data) CHECK(g == 1.0);
}

TEST_CASE("backward of sum(x*x) is 2x") {
    Rng rng(5);
    TensorD xv = TensorD::random_uniform(1, 1, 4, 4, rng, -1.0, 1.0);
    Tape<double> t;
    int x = t.leaf(xv, true);
    t.backward(t.sum(t.hadamard(x, x)));
    for (std::size_t i = 0; i < xv.data.size(); ++i)
        CHECK(t.grad(x).data[i] == doctest::Approx(2.0 * xv.data[i]));
}

TEST_CASE("backward twice accumulates exactly 2x") {
    Rng rng(7);
    TensorD xv = TensorD::random_uniform(1, 1, 3, 3, rng, -1.0, 1.0);
    Tape<double> t;
    int x = t.leaf(xv, true);
    int loss = t.sum(t.sigmoid(x));
    t.backward(loss);
    std::vector<double> once = t.grad(x).data;
    t.backward(loss);
    for (std::size_t i = 0; i < once.size(); ++i)
        CHECK(t.grad(x).data[i] == doctest::Approx(2.0 * once[i]).epsilon(1e-15));
}

TEST_CASE("backward rejects non-scalar loss") {
    Tape<double> t;
    int x = t.leaf(TensorD(1, 1, 2, 2, 1.0), true);
    CHECK_THROWS_AS(t.backward(x), ShapeError);
}

TEST_CASE("grad_check is near-exact for a linear map") {
    Rng rng(11);
    TensorD x = TensorD::random_uniform(1, 2, 4, 4, rng, -1.0, 1.0);
    TensorD w = TensorD::random_uniform(3, 2, 3, 3, rng, -1.0, 1.0);
    double err = grad_check(
        [&](Tape<double>& t, const std::vector<int>& l) {
            ConvSpec spec{2, 3, 3, 3, 1, 1, 1};
            return t.sum(t.conv2d(l[0], l[1], -1, spec));
        },
        {x, w});
    CHECK(err < 1e-8);  // central differences bottom out around eps^2 + roundoff/eps
}

namespace {

// every differentiable op, checked against central differences on 3 seeds
void check_all_ops(std::uint64_t seed) {
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

    auto run = [&](const char* name, auto build, std::vector<TensorD> inputs) {
        const double err = grad_check(build, std::move(inputs));
        INFO(name << " rel err " << err);
        CHECK(err < 1e-4);
    };

    run("conv2d+bias",
        [](Tape<double>& t, const std::vector<int>& l) {
            ConvSpec spec{2, 3, 3, 3, 1, 1, 1};
            return t.sum(t.conv2d(l[0], l[1], l[2], spec));
        },
        {x, w, b3});
    run("conv2d grouped",
        [](Tape<double>& t, const std::vector<int>& l) {
            ConvSpec spec{2, 18, 1, 1, 1, 0, 2};
            return t.sum(t.sigmoid(t.conv2d(l[0], l[1], -1, spec)));
        },
        {x, wg});
    run("avg_pool_same",
        [](Tape<double>& t, const std::vector<int>& l) {
            return t.sum(t.hadamard(t.avg_pool_same(l[0], 3), t.avg_pool_same(l[0], 3)));
        },
        {x});
    run("global_avg_pool",
        [](Tape<double>& t, const std::vector<int>& l) {
            return t.sum(t.sigmoid(t.global_avg_pool(l[0])));
        },
        {x});
    run("sigmoid",
        [](Tape<double>& t, const std::vector<int>& l) { return t.sum(t.sigmoid(l[0])); }, {x});
    run("relu",
        [](Tape<double>& t, const std::vector<int>& l) {
            return t.sum(t.hadamard(t.relu(l[0]), t.relu(l[0])));
        },
        {x});
    run("prelu incl. slope",
        [](Tape<double>& t, const std::vector<int>& l) {
            return t.sum(t.hadamard(t.prelu(l[0], l[1]), t.prelu(l[0], l[1])));
        },
        {x, slope});
    run("upsample bilinear",
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
    run("hadamard", [](Tape<double>& t, const std::vector<int>& l) { return t.sum(t.hadamard(l[0], l[1])); },
        {x, y});
    run("add",
        [](Tape<double>& t, const std::vector<int>& l) {
            int s = t.add(l[0], l[1]);
            return t.sum(t.hadamard(s, s));
        },
        {x, y});
    run("broadcast_hw",
        [](Tape<double>& t, const std::vector<int>& l) {
            int bcast = t.broadcast_hw(l[1], 5, 5);
            return t.sum(t.hadamard(l[0], bcast));
        },
        {x, v});
    run("mul_bcast_c",
        [](Tape<double>& t, const std::vector<int>& l) {
            int m = t.mul_bcast_c(l[0], l[1]);
            return t.sum(t.hadamard(m, m));
        },
        {x, mask});
    run("channel stats",
        [](Tape<double>& t, const std::vector<int>& l) {
            int s = t.concat(t.channel_mean(l[0]), t.channel_max(l[0]));
            return t.sum(t.hadamard(s, s));
        },
        {x});
    run("abs",
        [](Tape<double>& t, const std::vector<int>& l) {
            int a = t.abs(l[0]);
            return t.sum(t.hadamard(a, a));
        },
        {x});
    run("adaptive_conv (rearranged attention)",
        [](Tape<double>& t, const std::vector<int>& l) {
            int a = t.sigmoid(l[1]);
            int out = t.adaptive_conv(l[0], a, l[2]);
            return t.sum(t.hadamard(out, out));
        },
        {TensorD(x.n, x.c, 4, 4, 0.5), x9, kern});
    run("mse",
        [&target](Tape<double>& t, const std::vector<int>& l) {
            return t.mse(l[0], t.leaf(target));
        },
        {x});
}

}  // namespace

TEST_CASE("all differentiable ops pass grad_check on three seeds") {
    for (std::uint64_t seed : {101ull, 202ull, 303ull}) check_all_ops(seed);
}

TEST_CASE("sigmoid composite grad_check error is small") {
    Rng rng(55);
    TensorD x = TensorD::random_uniform(1, 1, 4, 4, rng, -2.0, 2.0);
    double err = grad_check(
        [](Tape<double>& t, const std::vector<int>& l) {
            return t.sum(t.sigmoid(t.sigmoid(l[0])));
        },
        {x});
    CHECK(err < 1e-6);
}

TEST_CASE("full RAPConv layer gradients match finite differences") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        Rng rng(seed);
        RapConvParams<double> p = RapConvParams<double>::init(2, 2, 4, rng);
        // randomize the zero-initialized pieces so the check is not trivial
        p.attn_weight = TensorD::random_uniform(18, 1, 1, 1, rng, -0.5, 0.5);
        p.attn_bias = TensorD::random_uniform(1, 18, 1, 1, rng, -0.5, 0.5);
        p.ghbm_w2 = TensorD::random_uniform(2, 4, 1, 1, rng, -0.5, 0.5);
        TensorD x = TensorD::random_uniform(1, 2, 5, 5, rng, -1.0, 1.0);
        nudge_from_zero(x, 1e-3);
        const double err = grad_check(
            [&](Tape<double>& t, const std::vector<int>& l) {
                RapConvNodes nodes;
                nodes.in_c = 2; nodes.out_c = 2; nodes.hidden = 4; nodes.adaptive = true;
                nodes.base = l[1]; nodes.attn_w = l[2]; nodes.attn_b = l[3];
                nodes.gw1 = l[4]; nodes.gb1 = l[5]; nodes.gw2 = l[6]; nodes.gb2 = l[7];
                int out = rapconv_forward(t, l[0], nodes);
                return t.sum(t.hadamard(out, out));
            },
            {x, p.base_kernel, p.attn_weight, p.attn_bias, p.ghbm_w1, p.ghbm_b1, p.ghbm_w2,
             p.ghbm_b2});
        INFO("seed " << seed << " err " << err);
        CHECK(err < 1e-4);
    }
}
