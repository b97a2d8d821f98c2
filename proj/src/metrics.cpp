#include "rapnet/metrics.hpp"

#include "rapnet/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

namespace rapnet {

using json = nlohmann::json;

namespace {

constexpr double kPi = 3.14159265358979323846;

TensorD band(const TensorD& t, int b) {
    TensorD out(1, 1, t.h, t.w);
    std::copy_n(&t.data[static_cast<std::size_t>(b) * t.plane()], t.plane(), out.data.begin());
    return out;
}

void check_pair(const TensorD& a, const TensorD& b, const char* op) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    if (a.n != 1) throw ShapeError(std::string(op) + ": expected a single image (n == 1)");
}

// 3x3 Laplacian high-pass, center 8 / neighbors -1, divided by 8; zero pad.
TensorD laplacian_hp(const TensorD& x) {
    TensorD out = TensorD::zeros_like(x);
    for (int ci = 0; ci < x.c; ++ci)
        for (int y = 0; y < x.h; ++y)
            for (int xx = 0; xx < x.w; ++xx) {
                double acc = 8.0 * x.at(0, ci, y, xx);
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        if (dy == 0 && dx == 0) continue;
                        const int iy = y + dy, ix = xx + dx;
                        if (iy < 0 || iy >= x.h || ix < 0 || ix >= x.w) continue;
                        acc -= x.at(0, ci, iy, ix);
                    }
                out.at(0, ci, y, xx) = acc / 8.0;
            }
    return out;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b, bool* degenerate) {
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) { ma += a[i]; mb += b[i]; }
    ma /= n; mb /= n;
    double va = 0.0, vb = 0.0, cov = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
        cov += (a[i] - ma) * (b[i] - mb);
    }
    if (va == 0.0 || vb == 0.0) {
        *degenerate = true;
        return 0.0;
    }
    *degenerate = false;
    return cov / std::sqrt(va * vb);
}

// block start offsets covering [0, len) with a final flush block
std::vector<int> block_starts(int len, int block, int shift) {
    std::vector<int> out;
    for (int s = 0; s + block <= len; s += shift) out.push_back(s);
    if (out.empty() || out.back() + block < len) out.push_back(len - block);
    return out;
}

// ---- Cayley-Dickson arithmetic on length-2^n coefficient vectors ----

using HVec = std::vector<double>;

HVec half_conj(HVec v) {
    for (std::size_t i = 1; i < v.size(); ++i) v[i] = -v[i];
    return v;
}

HVec onion_mult(const HVec& x, const HVec& y) {
    const std::size_t N = x.size();
    if (N == 1) return {x[0] * y[0]};
    const std::size_t L = N / 2;
    HVec a(x.begin(), x.begin() + L), b(x.begin() + L, x.end());
    HVec c(y.begin(), y.begin() + L), d(y.begin() + L, y.end());
    HVec lo, hi;
    if (N == 2) {
        lo = {a[0] * c[0] - d[0] * b[0]};
        hi = {a[0] * d[0] + c[0] * b[0]};
    } else {
        const HVec t1 = onion_mult(a, c), t2 = onion_mult(d, half_conj(b));
        const HVec t3 = onion_mult(half_conj(a), d), t4 = onion_mult(c, b);
        lo.resize(L); hi.resize(L);
        for (std::size_t i = 0; i < L; ++i) { lo[i] = t1[i] - t2[i]; hi[i] = t3[i] + t4[i]; }
    }
    lo.insert(lo.end(), hi.begin(), hi.end());
    return lo;
}

HVec conj(HVec v) {
    for (std::size_t i = 1; i < v.size(); ++i) v[i] = -v[i];
    return v;
}

double norm2(const HVec& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}

// One block's hypercomplex UIQI; z1/z2 are per-pixel band vectors of
// dimension 2^n. dim == 1 keeps the covariance sign (plain UIQI).
double hyper_q_block(const std::vector<HVec>& z1, const std::vector<HVec>& z2) {
    const std::size_t npx = z1.size();
    const std::size_t dim = z1[0].size();
    HVec m1(dim, 0.0), m2(dim, 0.0);
    for (std::size_t i = 0; i < npx; ++i)
        for (std::size_t k = 0; k < dim; ++k) { m1[k] += z1[i][k]; m2[k] += z2[i][k]; }
    for (std::size_t k = 0; k < dim; ++k) { m1[k] /= static_cast<double>(npx); m2[k] /= static_cast<double>(npx); }

    double sq1 = 0.0, sq2 = 0.0;
    HVec cross(dim, 0.0);
    for (std::size_t i = 0; i < npx; ++i) {
        sq1 += norm2(z1[i]);
        sq2 += norm2(z2[i]);
        const HVec p = onion_mult(z1[i], conj(z2[i]));
        for (std::size_t k = 0; k < dim; ++k) cross[k] += p[k];
    }
    const double denom_n = static_cast<double>(npx) - 1.0;
    const double va = (sq1 - static_cast<double>(npx) * norm2(m1)) / denom_n;
    const double vb = (sq2 - static_cast<double>(npx) * norm2(m2)) / denom_n;
    const HVec mm = onion_mult(m1, conj(m2));
    HVec cov(dim);
    for (std::size_t k = 0; k < dim; ++k)
        cov[k] = (cross[k] - static_cast<double>(npx) * mm[k]) / denom_n;

    const double denomv = va + vb;
    if (denomv == 0.0) {
        // flat/flat block: unity only when the mean vectors coincide
        for (std::size_t k = 0; k < dim; ++k)
            if (m1[k] != m2[k]) return 0.0;
        return 1.0;
    }
    const double nm1 = std::sqrt(norm2(m1)), nm2 = std::sqrt(norm2(m2));
    const double denomm = nm1 * nm1 + nm2 * nm2;
    const double lum = denomm == 0.0 ? 1.0 : 2.0 * nm1 * nm2 / denomm;
    const double mag = dim == 1 ? cov[0] : std::sqrt(norm2(cov));
    return mag * (2.0 / denomv) * lum;
}

double blockwise_q(const TensorD& a, const TensorD& b, int block, int shift, int dim_pad) {
    const int blk = std::min({block, a.h, a.w});
    const int sh = std::min(shift, blk);
    const auto ys = block_starts(a.h, blk, sh);
    const auto xs = block_starts(a.w, blk, sh);
    const int dim = dim_pad;
    double acc = 0.0;
    int count = 0;
    std::vector<HVec> z1, z2;
    for (int y0 : ys)
        for (int x0 : xs) {
            z1.assign(static_cast<std::size_t>(blk) * blk, HVec(static_cast<std::size_t>(dim), 0.0));
            z2.assign(static_cast<std::size_t>(blk) * blk, HVec(static_cast<std::size_t>(dim), 0.0));
            std::size_t i = 0;
            for (int y = y0; y < y0 + blk; ++y)
                for (int x = x0; x < x0 + blk; ++x, ++i)
                    for (int c = 0; c < a.c; ++c) {
                        z1[i][static_cast<std::size_t>(c)] = a.at(0, c, y, x);
                        z2[i][static_cast<std::size_t>(c)] = b.at(0, c, y, x);
                    }
            acc += hyper_q_block(z1, z2);
            ++count;
        }
    return acc / static_cast<double>(count);
}

}  // namespace

SamResult sam(const TensorD& fused, const TensorD& ref) {
    check_pair(fused, ref, "sam");
    if (fused.c < 2) throw ShapeError("sam: needs at least 2 bands");
    double acc = 0.0;
    std::int64_t used = 0;
    for (int y = 0; y < fused.h; ++y)
        for (int x = 0; x < fused.w; ++x) {
            double dot = 0.0, nf = 0.0, nr = 0.0;
            for (int c = 0; c < fused.c; ++c) {
                const double f = fused.at(0, c, y, x), r = ref.at(0, c, y, x);
                dot += f * r;
                nf += f * f;
                nr += r * r;
            }
            if (nf == 0.0 || nr == 0.0) continue;  // undefined angle, skipped
            const double cosv = std::clamp(dot / std::sqrt(nf * nr), -1.0, 1.0);
            acc += std::acos(cosv);
            ++used;
        }
    SamResult out;
    if (used == 0) {
        out.all_zero_warning = true;
        return out;
    }
    out.degrees = acc / static_cast<double>(used) * 180.0 / kPi;
    return out;
}

double ergas(const TensorD& fused, const TensorD& ref, int ratio) {
    check_pair(fused, ref, "ergas");
    if (ratio < 1) throw ValueError("ergas: ratio must be >= 1");
    double acc = 0.0;
    const double npx = static_cast<double>(fused.plane());
    for (int b = 0; b < fused.c; ++b) {
        double mu = 0.0, se = 0.0;
        for (int y = 0; y < fused.h; ++y)
            for (int x = 0; x < fused.w; ++x) {
                mu += ref.at(0, b, y, x);
                const double d = fused.at(0, b, y, x) - ref.at(0, b, y, x);
                se += d * d;
            }
        mu /= npx;
        if (mu == 0.0) throw ValueError("ergas: reference band " + std::to_string(b) + " has zero mean");
        acc += se / npx / (mu * mu);
    }
    return 100.0 / ratio * std::sqrt(acc / fused.c);
}

SccResult scc(const TensorD& fused, const TensorD& ref) {
    check_pair(fused, ref, "scc");
    const TensorD hf = laplacian_hp(fused);
    const TensorD hr = laplacian_hp(ref);
    SccResult out;
    double acc = 0.0;
    int used = 0;
    for (int b = 0; b < fused.c; ++b) {
        std::vector<double> va(hf.data.begin() + b * hf.plane(), hf.data.begin() + (b + 1) * hf.plane());
        std::vector<double> vb(hr.data.begin() + b * hr.plane(), hr.data.begin() + (b + 1) * hr.plane());
        bool degenerate = false;
        const double r = pearson(va, vb, &degenerate);
        if (degenerate) {
            ++out.skipped_bands;
            continue;
        }
        acc += r;
        ++used;
    }
    out.value = used > 0 ? acc / used : 0.0;
    return out;
}

double uiqi(const TensorD& a, const TensorD& b, int block, int shift) {
    check_pair(a, b, "uiqi");
    if (a.c != 1) throw ShapeError("uiqi: expected single-band images");
    return blockwise_q(a, b, block, shift, 1);
}

double q2n(const TensorD& fused, const TensorD& ref, int block, int shift) {
    check_pair(fused, ref, "q2n");
    int dim = 1;
    while (dim < fused.c) dim *= 2;  // zero-pad band axis to a power of 2
    return blockwise_q(fused, ref, block, shift, dim);
}

FullResResult full_res_suite(const TensorD& fused, const TensorD& ms, const TensorD& pan,
                             int ratio, double gnyq) {
    if (fused.n != 1 || ms.n != 1 || pan.n != 1)
        throw ShapeError("full_res_suite: expected single images");
    if (pan.c != 1) throw ShapeError("full_res_suite: PAN must be single-band");
    if (fused.h != pan.h || fused.w != pan.w || fused.c != ms.c ||
        fused.h != ms.h * ratio || fused.w != ms.w * ratio)
        throw ShapeError("full_res_suite: inconsistent shapes (fused " + fused.shape_str() +
                         ", ms " + ms.shape_str() + ", pan " + pan.shape_str() + ")");
    const int S = fused.c;
    FullResResult out;

    // spectral distortion: inter-band Q relations, fused vs original MS
    if (S > 1) {
        double acc = 0.0;
        for (int b = 0; b < S; ++b)
            for (int r = 0; r < S; ++r) {
                if (b == r) continue;
                const double qf = uiqi(band(fused, b), band(fused, r));
                const double qm = uiqi(band(ms, b), band(ms, r));
                acc += std::abs(qf - qm);
            }
        out.d_lambda = acc / (static_cast<double>(S) * (S - 1));
    }

    // spatial distortion: band-vs-PAN Q at both scales; PAN degraded by the
    // same MTF-matched operator as data simulation
    DegradeSpec ds;
    ds.gnyq = gnyq;
    ds.ratio = ratio;
    const TensorD pan_low = decimate(gaussian_blur(pan.cast<float>(), ds.sigma()), ratio).cast<double>();
    double acc = 0.0;
    for (int b = 0; b < S; ++b) {
        const double qf = uiqi(band(fused, b), pan);
        const double qm = uiqi(band(ms, b), pan_low);
        acc += std::abs(qf - qm);
    }
    out.d_s = acc / S;
    out.qnr = (1.0 - out.d_lambda) * (1.0 - out.d_s);
    return out;
}

void MetricsReport::finalize() {
    const std::size_t m = metric_names.size();
    mean.assign(m, 0.0);
    stddev.assign(m, 0.0);
    if (per_image.empty()) return;
    for (const auto& row : per_image)
        for (std::size_t k = 0; k < m; ++k) mean[k] += row[k];
    for (auto& v : mean) v /= static_cast<double>(per_image.size());
    for (const auto& row : per_image)
        for (std::size_t k = 0; k < m; ++k) stddev[k] += (row[k] - mean[k]) * (row[k] - mean[k]);
    for (auto& v : stddev) v = std::sqrt(v / static_cast<double>(per_image.size()));
}

std::string MetricsReport::summary_lines() const {
    const int prec = kind == Kind::Reduced ? 3 : 4;
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(prec);
    for (std::size_t k = 0; k < metric_names.size(); ++k)
        ss << metric_names[k] << ": " << mean[k] << "±" << stddev[k] << "\n";
    return ss.str();
}

void MetricsReport::write_json(const std::string& path) const {
    json j;
    j["set"] = kind == Kind::Reduced ? "reduced" : "full";
    j["metrics"] = metric_names;
    j["per_image"] = per_image;
    j["mean"] = mean;
    j["std"] = stddev;
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path + " for writing");
    os << j.dump(2) << "\n";
}

void MetricsReport::write_csv(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path + " for writing");
    os << "image";
    for (const auto& n : metric_names) os << "," << n;
    os << "\n";
    os.precision(12);
    for (std::size_t i = 0; i < per_image.size(); ++i) {
        os << i;
        for (double v : per_image[i]) os << "," << v;
        os << "\n";
    }
    os << "mean";
    for (double v : mean) os << "," << v;
    os << "\nstd";
    for (double v : stddev) os << "," << v;
    os << "\n";
}

MetricsReport reduced_report(const std::vector<TensorD>& fused, const std::vector<TensorD>& refs,
                             int ratio) {
    if (fused.size() != refs.size())
        throw ValueError("reduced_report: fused/reference counts differ");
    MetricsReport rep;
    rep.kind = MetricsReport::Kind::Reduced;
    rep.metric_names = {"ERGAS", "SAM", "Q2n", "SCC"};
    for (std::size_t i = 0; i < fused.size(); ++i) {
        rep.per_image.push_back({ergas(fused[i], refs[i], ratio), sam(fused[i], refs[i]).degrees,
                                 q2n(fused[i], refs[i]), scc(fused[i], refs[i]).value});
    }
    rep.finalize();
    return rep;
}

MetricsReport full_report(const std::vector<TensorD>& fused, const std::vector<TensorD>& ms,
                          const std::vector<TensorD>& pan, int ratio, double gnyq) {
    if (fused.size() != ms.size() || fused.size() != pan.size())
        throw ValueError("full_report: input counts differ");
    MetricsReport rep;
    rep.kind = MetricsReport::Kind::Full;
    rep.metric_names = {"D_lambda", "D_S", "QNR"};
    for (std::size_t i = 0; i < fused.size(); ++i) {
        const FullResResult r = full_res_suite(fused[i], ms[i], pan[i], ratio, gnyq);
        rep.per_image.push_back({r.d_lambda, r.d_s, r.qnr});
    }
    rep.finalize();
    return rep;
}

}  // namespace rapnet
