#include "doctest.h"

#include <cstdio>
#include <fstream>

#include "oracles.hpp"
#include "rapnet/data_io.hpp"
#include "rapnet/metrics.hpp"

using namespace rapnet;

namespace {
TensorD rand_img(Rng& rng, int s, int h, int w, double lo = 0.0, double hi = 1.0) {
    return TensorD::random_uniform(1, s, h, w, rng, lo, hi);
}
}  // namespace

TEST_CASE("identities: every reduced metric is perfect on a self-comparison") {
    Rng rng(1);
    TensorD x = rand_img(rng, 4, 40, 40);
    CHECK(sam(x, x).degrees == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(ergas(x, x, 4) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(scc(x, x).value == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(q2n(x, x) == doctest::Approx(1.0).epsilon(1e-12));
    TensorD x1 = rand_img(rng, 1, 40, 40);
    CHECK(uiqi(x1, x1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("sam: orthogonal spectra give 90 degrees; scaling gives 0") {
    TensorD a(1, 2, 2, 2, 0.0), b(1, 2, 2, 2, 0.0);
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 2; ++x) {
            a.at(0, 0, y, x) = 1.0;  // spectrum (1, 0)
            b.at(0, 1, y, x) = 1.0;  // spectrum (0, 1)
        }
    CHECK(sam(a, b).degrees == doctest::Approx(90.0).epsilon(1e-12));

    Rng rng(2);
    TensorD x = rand_img(rng, 3, 8, 8, 0.1, 1.0);
    TensorD x2 = x;
    for (auto& v : x2.data) v *= 3.7;  // per-pixel scaling leaves the angle at 0
    CHECK(sam(x2, x).degrees < 1e-5);  // acos loses precision near cos = 1

    TensorD z(1, 2, 2, 2, 0.0);
    SamResult r = sam(z, z);
    CHECK(r.degrees == 0.0);
    CHECK(r.all_zero_warning);
}

TEST_CASE("ergas: constant offset has a closed form") {
    // ref constant mu, fused mu + d: RMSE = |d|, mean = mu,
    // ERGAS = 100/r * |d| / mu
    TensorD ref(1, 3, 10, 10, 0.5);
    TensorD fused(1, 3, 10, 10, 0.625);
    CHECK(ergas(fused, ref, 4) == doctest::Approx(100.0 / 4.0 * 0.125 / 0.5).epsilon(1e-12));
    CHECK(ergas(fused, ref, 2) == doctest::Approx(100.0 / 2.0 * 0.125 / 0.5).epsilon(1e-12));

    // a zero-mean reference band must be reported, not divided by
    TensorD zref(1, 1, 4, 4, 0.0);
    TensorD f2(1, 1, 4, 4, 0.1);
    CHECK_THROWS_AS(ergas(f2, zref, 4), ValueError);
}

TEST_CASE("scc: sign and bounds") {
    Rng rng(3);
    TensorD x = rand_img(rng, 2, 24, 24);
    TensorD neg = x;
    for (auto& v : neg.data) v = -v;  // high-pass flips sign with the image
    SccResult r = scc(neg, x);
    CHECK(r.value == doctest::Approx(-1.0).epsilon(1e-9));

    TensorD y = rand_img(rng, 2, 24, 24);
    SccResult q = scc(x, y);
    CHECK(q.value <= 1.0 + 1e-12);
    CHECK(q.value >= -1.0 - 1e-12);

    TensorD flat(1, 1, 8, 8, 0.0);  // zero image: high-pass is identically 0
    SccResult s = scc(flat, flat);
    CHECK(s.skipped_bands == 1);  // constant band has no high-pass variance
}

TEST_CASE("uiqi: mean shift and gain distortions strictly reduce the index") {
    Rng rng(4);
    TensorD x = rand_img(rng, 1, 64, 64);
    TensorD shifted = x;
    for (auto& v : shifted.data) v += 0.4;
    const double qs = uiqi(shifted, x);
    CHECK(qs < 1.0);
    CHECK(qs > 0.0);

    TensorD scaled = x;
    for (auto& v : scaled.data) v *= 3.0;
    const double qg = uiqi(scaled, x);
    CHECK(qg < 1.0);

    // anti-correlated signal drives the index negative
    TensorD anti = x;
    for (auto& v : anti.data) v = -v;
    CHECK(uiqi(anti, x) < 0.0);
}

TEST_CASE("q2n on a single band equals the scalar UIQI oracle (50 pairs)") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const int h = 33 + static_cast<int>(rng.next_below(32));
        const int w = 33 + static_cast<int>(rng.next_below(32));
        TensorD a = rand_img(rng, 1, h, w);
        TensorD b = rand_img(rng, 1, h, w);
        const double got = q2n(a, b);
        const double want = oracle::uiqi_naive(a, b, 32, 32);
        CHECK(std::abs(got - want) < 1e-9);
    }
}

TEST_CASE("library uiqi also matches the oracle") {
    Rng rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        const int h = 33 + static_cast<int>(rng.next_below(32));  // keep >= block so the oracle applies as-is
        TensorD a = rand_img(rng, 1, h, h);
        TensorD b = rand_img(rng, 1, h, h);
        CHECK(std::abs(uiqi(a, b) - oracle::uiqi_naive(a, b, 32, 32)) < 1e-12);
    }
}

TEST_CASE("q2n: symmetric in its arguments, perfect on any self-comparison") {
    // note: q2n is *not* invariant under band permutations (relabelling the
    // hypercomplex units is not an algebra automorphism), but conjugating the
    // covariance leaves its modulus alone, so swapping the images is safe
    Rng rng(7);
    TensorD a = rand_img(rng, 4, 36, 36);
    TensorD b = rand_img(rng, 4, 36, 36);
    CHECK(q2n(b, a) == doctest::Approx(q2n(a, b)).epsilon(1e-12));
    const int perm[4] = {2, 0, 3, 1};
    TensorD ap(1, 4, 36, 36);
    for (int c = 0; c < 4; ++c)
        for (int y = 0; y < 36; ++y)
            for (int x = 0; x < 36; ++x) ap.at(0, c, y, x) = a.at(0, perm[c], y, x);
    CHECK(q2n(ap, ap) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("q2n degrades when one band is corrupted") {
    Rng rng(8);
    TensorD ref = rand_img(rng, 4, 36, 36);
    TensorD good = ref;
    TensorD bad = ref;
    TensorD noise = rand_img(rng, 4, 36, 36);
    for (int y = 0; y < 36; ++y)
        for (int x = 0; x < 36; ++x) bad.at(0, 2, y, x) = noise.at(0, 2, y, x);
    CHECK(q2n(bad, ref) < q2n(good, ref));
}

TEST_CASE("full-resolution suite: QNR identity and ideal-fusion behaviour") {
    Rng rng(9);
    const int r = 4;
    DegradeSpec spec;
    spec.ratio = r;
    auto data = synth_dataset(91, 1, 64, 4, spec);
    const FusionPair& pr = data[0];
    TensorD pan = pr.pan.cast<double>();
    TensorD ms = pr.ms.cast<double>();
    TensorD ref = pr.ref->cast<double>();

    FullResResult ideal = full_res_suite(ref, ms, pan, r);
    CHECK(ideal.qnr ==
          doctest::Approx((1.0 - ideal.d_lambda) * (1.0 - ideal.d_s)).epsilon(1e-12));
    CHECK(ideal.d_lambda >= 0.0);
    CHECK(ideal.d_s >= 0.0);
    CHECK(ideal.qnr <= 1.0 + 1e-12);

    // the upsampled-MS "fusion" preserves spectra, so D_lambda should be small
    TensorD ms_up = upsample_bilinear(ms, r);
    FullResResult base = full_res_suite(ms_up, ms, pan, r);
    CHECK(base.d_lambda < 0.15);

    // wrecking the spectra inflates D_lambda
    TensorD wrecked = ms_up;
    for (int y = 0; y < wrecked.h; ++y)
        for (int x = 0; x < wrecked.w; ++x) {
            wrecked.at(0, 0, y, x) = ms_up.at(0, 3, y, x) * 0.9 + 0.05;
            wrecked.at(0, 3, y, x) = 1.0 - ms_up.at(0, 0, y, x);
        }
    FullResResult worse = full_res_suite(wrecked, ms, pan, r);
    CHECK(worse.d_lambda > base.d_lambda);
}

TEST_CASE("reports: shape, stats, and serialization") {
    Rng rng(10);
    std::vector<TensorD> fused, refs;
    for (int i = 0; i < 3; ++i) {
        TensorD r0 = rand_img(rng, 2, 33, 33);
        TensorD f = r0;
        for (auto& v : f.data) v += rng.uniform(-0.02, 0.02);
        fused.push_back(f);
        refs.push_back(r0);
    }
    MetricsReport rep = reduced_report(fused, refs, 4);
    CHECK(rep.kind == MetricsReport::Kind::Reduced);
    REQUIRE(rep.per_image.size() == 3);
    REQUIRE(rep.metric_names.size() == rep.per_image[0].size());
    REQUIRE(rep.mean.size() == rep.metric_names.size());

    // population std of identical rows is 0
    MetricsReport same = reduced_report({refs[0], refs[0]}, {refs[0], refs[0]}, 4);
    for (double s : same.stddev) CHECK(s == doctest::Approx(0.0).epsilon(1e-12));

    const std::string summary = rep.summary_lines();
    for (const auto& n : rep.metric_names)
        CHECK(summary.find(n) != std::string::npos);

    rep.write_json("test_report.json");
    rep.write_csv("test_report.csv");
    std::ifstream j("test_report.json"), c("test_report.csv");
    CHECK(j.good());
    CHECK(c.good());
    j.close();
    c.close();
    std::remove("test_report.json");
    std::remove("test_report.csv");
}

TEST_CASE("metrics validate their input shapes") {
    TensorD a(1, 2, 8, 8, 0.5), b(1, 2, 8, 9, 0.5), c(1, 3, 8, 8, 0.5);
    CHECK_THROWS_AS(sam(a, b), ShapeError);
    CHECK_THROWS_AS(ergas(a, c, 4), ShapeError);
    CHECK_THROWS_AS(scc(a, b), ShapeError);
    CHECK_THROWS_AS(q2n(a, c), ShapeError);
}
