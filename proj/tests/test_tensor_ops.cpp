#include "doctest.h"

#include "oracles.hpp"
#include "rapnet/ops.hpp"

using namespace rapnet;

TEST_CASE("conv2d box sum on a 3x3 image of ones") {
    TensorD x(1, 1, 3, 3, 1.0);
    TensorD w(1, 1, 3, 3, 1.0);
    ConvSpec spec{1, 1, 3, 3, 1, 1, 1};
    TensorD y = conv2d(x, w, nullptr, spec);
    CHECK(y.at(0, 0, 1, 1) == doctest::Approx(9.0));
    CHECK(y.at(0, 0, 0, 0) == doctest::Approx(4.0));
    CHECK(y.at(0, 0, 2, 2) == doctest::Approx(4.0));
    CHECK(y.at(0, 0, 0, 1) == doctest::Approx(6.0));
}

TEST_CASE("conv2d identity kernel reproduces the input") {
    Rng rng(7);
    TensorD x = TensorD::random_uniform(1, 2, 5, 6, rng, -1.0, 1.0);
    TensorD w(2, 2, 3, 3);
    w.at(0, 0, 1, 1) = 1.0;
    w.at(1, 1, 1, 1) = 1.0;
    ConvSpec spec{2, 2, 3, 3, 1, 1, 1};
    TensorD y = conv2d(x, w, nullptr, spec);
    CHECK(oracle::max_abs_diff(x, y) == 0.0);
}

TEST_CASE("conv2d matches the nested-loop oracle") {
    Rng rng(11);
    TensorD x = TensorD::random_uniform(1, 2, 5, 5, rng, -1.0, 1.0);
    TensorD w = TensorD::random_uniform(3, 2, 3, 3, rng, -1.0, 1.0);
    TensorD b = TensorD::random_uniform(3, 1, 1, 1, rng, -1.0, 1.0);
    ConvSpec spec{2, 3, 3, 3, 1, 1, 1};
    CHECK(oracle::max_abs_diff(conv2d(x, w, &b, spec), oracle::conv2d_naive(x, w, &b, 1, 1, 1)) < 1e-12);
}

TEST_CASE("grouped conv2d equals independent per-group convolutions") {
    Rng rng(13);
    const int groups = 3, cg = 2, pg = 2;
    TensorD x = TensorD::random_uniform(2, groups * cg, 6, 7, rng, -1.0, 1.0);
    TensorD w = TensorD::random_uniform(groups * pg, cg, 3, 3, rng, -1.0, 1.0);
    ConvSpec spec{groups * cg, groups * pg, 3, 3, 1, 1, groups};
    TensorD y = conv2d(x, w, nullptr, spec);
    CHECK(oracle::max_abs_diff(y, oracle::conv2d_naive(x, w, nullptr, 1, 1, groups)) < 1e-12);

    for (int g = 0; g < groups; ++g) {
        TensorD xs(x.n, cg, x.h, x.w), ws(pg, cg, 3, 3);
        for (int n = 0; n < x.n; ++n)
            for (int c = 0; c < cg; ++c)
                for (int yy = 0; yy < x.h; ++yy)
                    for (int xx = 0; xx < x.w; ++xx)
                        xs.at(n, c, yy, xx) = x.at(n, g * cg + c, yy, xx);
        for (int p = 0; p < pg; ++p)
            for (int c = 0; c < cg; ++c)
                for (int i = 0; i < 3; ++i)
                    for (int j = 0; j < 3; ++j) ws.at(p, c, i, j) = w.at(g * pg + p, c, i, j);
        ConvSpec sub{cg, pg, 3, 3, 1, 1, 1};
        TensorD ys = conv2d(xs, ws, nullptr, sub);
        for (int n = 0; n < x.n; ++n)
            for (int p = 0; p < pg; ++p)
                for (int yy = 0; yy < ys.h; ++yy)
                    for (int xx = 0; xx < ys.w; ++xx)
                        CHECK(ys.at(n, p, yy, xx) == doctest::Approx(y.at(n, g * pg + p, yy, xx)).epsilon(1e-12));
    }
}

TEST_CASE("conv2d is linear in its input") {
    Rng rng(17);
    TensorD x = TensorD::random_uniform(1, 2, 5, 5, rng, -1.0, 1.0);
    TensorD y = TensorD::random_uniform(1, 2, 5, 5, rng, -1.0, 1.0);
    TensorD w = TensorD::random_uniform(2, 2, 3, 3, rng, -1.0, 1.0);
    ConvSpec spec{2, 2, 3, 3, 1, 1, 1};
    const double alpha = 0.7, beta = -1.3;
    TensorD mix = TensorD::zeros_like(x);
    for (std::size_t i = 0; i < x.data.size(); ++i) mix.data[i] = alpha * x.data[i] + beta * y.data[i];
    TensorD lhs = conv2d(mix, w, nullptr, spec);
    TensorD cx = conv2d(x, w, nullptr, spec), cy = conv2d(y, w, nullptr, spec);
    for (std::size_t i = 0; i < lhs.data.size(); ++i)
        CHECK(lhs.data[i] == doctest::Approx(alpha * cx.data[i] + beta * cy.data[i]).epsilon(1e-10));
}

TEST_CASE("conv2d rejects mismatched shapes with a named dimension") {
    TensorD x(1, 3, 4, 4);
    TensorD w(2, 2, 3, 3);
    ConvSpec spec{2, 2, 3, 3, 1, 1, 1};
    CHECK_THROWS_AS(conv2d(x, w, nullptr, spec), ShapeError);
    ConvSpec bad_groups{4, 2, 1, 1, 1, 0, 3};
    CHECK_THROWS_AS(conv2d(x, w, nullptr, bad_groups), ShapeError);
}

TEST_CASE("avg_pool_same preserves constants and uses in-bounds divisors") {
    TensorD c(1, 1, 4, 5, 5.0);
    CHECK(oracle::max_abs_diff(avg_pool_same(c, 3), c) == 0.0);

    TensorD row(1, 1, 1, 3);
    row.data = {0.0, 3.0, 0.0};
    TensorD pooled = avg_pool_same(row, 3);
    CHECK(pooled.data[0] == doctest::Approx(1.5));
    CHECK(pooled.data[1] == doctest::Approx(1.0));
    CHECK(pooled.data[2] == doctest::Approx(1.5));

    Rng rng(23);
    TensorD x = TensorD::random_uniform(1, 1, 7, 7, rng, -2.0, 2.0);
    CHECK(oracle::max_abs_diff(avg_pool_same(x, 3), oracle::avg_pool_naive(x, 3)) < 1e-12);

    CHECK_THROWS_AS(avg_pool_same(x, 2), ShapeError);
}

TEST_CASE("global_avg_pool") {
    TensorD c(2, 3, 4, 4, 2.5);
    TensorD g = global_avg_pool(c);
    CHECK(g.n == 2);
    CHECK(g.h == 1);
    for (double v : g.data) CHECK(v == doctest::Approx(2.5));

    TensorD q(1, 1, 2, 2);
    q.data = {1.0, 2.0, 3.0, 4.0};
    CHECK(global_avg_pool(q).data[0] == doctest::Approx(2.5));

    Rng rng(29);
    TensorD x = TensorD::random_uniform(2, 4, 6, 6, rng, -1.0, 1.0);
    TensorD gp = global_avg_pool(x);
    for (int n = 0; n < 2; ++n)
        for (int ci = 0; ci < 4; ++ci) {
            double acc = 0.0;
            for (int y = 0; y < 6; ++y)
                for (int xx = 0; xx < 6; ++xx) acc += x.at(n, ci, y, xx);
            CHECK(gp.at(n, ci, 0, 0) == doctest::Approx(acc / 36.0).epsilon(1e-12));
        }
}

TEST_CASE("activations") {
    TensorD x(1, 1, 1, 3);
    x.data = {0.0, -2.0, 3.0};
    CHECK(sigmoid(x).data[0] == doctest::Approx(0.5));
    CHECK(prelu(x, 0.25).data[1] == doctest::Approx(-0.5));
    TensorD r = relu(x);
    CHECK(r.data[1] == 0.0);
    CHECK(r.data[2] == 3.0);
}

TEST_CASE("bilinear upsample, hand-checked weights") {
    TensorD x(1, 1, 1, 2);
    x.data = {0.0, 4.0};
    TensorD y = upsample_bilinear(x, 2);
    REQUIRE(y.w == 4);
    CHECK(y.data[0] == doctest::Approx(0.0));
    CHECK(y.data[1] == doctest::Approx(1.0));
    CHECK(y.data[2] == doctest::Approx(3.0));
    CHECK(y.data[3] == doctest::Approx(4.0));
}

TEST_CASE("upsample preserves constants") {
    TensorD c(1, 2, 3, 3, 2.5);
    CHECK(oracle::max_abs_diff(upsample(c, 4, UpsampleMode::Bilinear), TensorD(1, 2, 12, 12, 2.5)) == 0.0);
    CHECK(oracle::max_abs_diff(upsample(c, 4, UpsampleMode::Poly23), TensorD(1, 2, 12, 12, 2.5)) < 1e-12);
}

TEST_CASE("poly23 taps sum to 1 per phase and reject non-dyadic ratios") {
    const auto& taps = poly23_taps();
    double even = 0.0, odd = 0.0;
    for (int k = -11; k <= 11; ++k)
        ((k % 2 == 0) ? even : odd) += taps[static_cast<std::size_t>(k + 11)];
    CHECK(even == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(odd == doctest::Approx(1.0).epsilon(1e-12));

    TensorD x(1, 1, 3, 3, 1.0);
    CHECK_THROWS_AS(upsample_poly23(x, 3), ShapeError);
}

TEST_CASE("elementwise and stacking ops") {
    Rng rng(31);
    TensorD x = TensorD::random_uniform(1, 3, 4, 4, rng, -1.0, 1.0);
    TensorD ones(1, 3, 4, 4, 1.0);
    TensorD zeros(1, 3, 4, 4, 0.0);
    CHECK(oracle::max_abs_diff(hadamard(x, ones), x) == 0.0);
    CHECK(oracle::max_abs_diff(add(x, zeros), x) == 0.0);

    TensorD b(1, 1, 4, 4, 0.5);
    TensorD cat = concat_channels(x, b);
    CHECK(cat.c == 4);
    CHECK(cat.at(0, 3, 2, 2) == 0.5);
    CHECK(cat.at(0, 1, 2, 2) == x.at(0, 1, 2, 2));

    TensorD bad(1, 3, 5, 4);
    CHECK_THROWS_AS(concat_channels(x, bad), ShapeError);
    CHECK_THROWS_AS(hadamard(x, bad), ShapeError);

    TensorD v(1, 3, 1, 1);
    v.data = {1.0, 2.0, 3.0};
    TensorD bc = broadcast_hw(v, 2, 2);
    CHECK(bc.at(0, 2, 1, 1) == 3.0);
    CHECK_THROWS_AS(broadcast_hw(x, 2, 2), ShapeError);
}

TEST_CASE("rearrange_9c index contract") {
    // nine constant channels 0..8 -> the patch [[0,1,2],[3,4,5],[6,7,8]] everywhere
    TensorD a(1, 9, 2, 2);
    for (int ch = 0; ch < 9; ++ch)
        for (int y = 0; y < 2; ++y)
            for (int x = 0; x < 2; ++x) a.at(0, ch, y, x) = ch;
    AttentionField<double> f(a);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) CHECK(f.at(0, 0, i, j, 1, 1) == 3 * i + j);

    Rng rng(37);
    TensorD r = TensorD::random_uniform(1, 18, 3, 3, rng, -1.0, 1.0);
    TensorD rr = rearrange_9c(r);
    CHECK(oracle::max_abs_diff(r, rr) == 0.0);  // identity layout round-trip
    AttentionField<double> view(r);
    for (int c = 0; c < 2; ++c)
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                for (int y = 0; y < 3; ++y)
                    for (int x = 0; x < 3; ++x)
                        CHECK(view.at(0, c, i, j, y, x) == r.at(0, 9 * c + 3 * i + j, y, x));

    TensorD bad(1, 8, 2, 2);
    CHECK_THROWS_AS([&] { AttentionField<double> v(bad); (void)v; }(), ShapeError);
}

TEST_CASE("ops are bit-identical across thread counts") {
    Rng rng(41);
    TensorD x = TensorD::random_uniform(2, 4, 16, 16, rng, -1.0, 1.0);
    TensorD w = TensorD::random_uniform(6, 4, 3, 3, rng, -1.0, 1.0);
    ConvSpec spec{4, 6, 3, 3, 1, 1, 1};
    set_num_threads(1);
    TensorD serial = conv2d(x, w, nullptr, spec);
    TensorD pool1 = avg_pool_same(x, 5);
    set_num_threads(4);
    TensorD parallel = conv2d(x, w, nullptr, spec);
    TensorD pool4 = avg_pool_same(x, 5);
    set_num_threads(0);
    CHECK(serial.data == parallel.data);
    CHECK(pool1.data == pool4.data);
}
