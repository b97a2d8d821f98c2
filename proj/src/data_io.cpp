#include "rapnet/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <zlib.h>

#include <nlohmann/json.hpp>

namespace rapnet {

using json = nlohmann::json;

void FusionPair::validate() const {
    if (pan.c != 1) throw ShapeError("fusion pair: PAN must be single-band, got " + pan.shape_str());
    if (pan.h != ms.h * ratio || pan.w != ms.w * ratio)
        throw ShapeError("fusion pair: PAN " + pan.shape_str() + " does not match MS " +
                         ms.shape_str() + " at ratio " + std::to_string(ratio));
    if (ref && (ref->c != ms.c || ref->h != pan.h || ref->w != pan.w))
        throw ShapeError("fusion pair: reference " + ref->shape_str() + " inconsistent with PAN/MS");
    auto in_range = [this](const TensorF& t) {
        for (float v : t.data)
            if (!(v >= 0.0f && v <= radiometric_max)) return false;
        return true;
    };
    if (!in_range(pan) || !in_range(ms) || (ref && !in_range(*ref)))
        throw ValueError("fusion pair: values outside [0, radiometric max]");
}

double DegradeSpec::sigma() const {
    if (gnyq <= 0.0 || gnyq >= 1.0) throw ValueError("degrade: GNyq must be in (0, 1)");
    if (ratio < 2) throw ValueError("degrade: ratio must be >= 2");
    const double pi = 3.14159265358979323846;
    return ratio / pi * std::sqrt(-2.0 * std::log(gnyq));
}

// ---------- NPY ----------

namespace {

std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

struct NpyHeader {
    std::string descr;
    bool fortran = false;
    std::vector<int> shape;
};

NpyHeader parse_npy_header(const std::string& hdr, const std::string& path) {
    NpyHeader out;
    auto find_value = [&](const std::string& key) -> std::string {
        auto pos = hdr.find("'" + key + "'");
        if (pos == std::string::npos) throw IoError("npy header missing '" + key + "' in " + path);
        pos = hdr.find(':', pos);
        return hdr.substr(pos + 1);
    };
    {
        std::string v = find_value("descr");
        auto q0 = v.find('\'');
        auto q1 = v.find('\'', q0 + 1);
        out.descr = v.substr(q0 + 1, q1 - q0 - 1);
    }
    out.fortran = find_value("fortran_order").find("True") != std::string::npos;
    {
        std::string v = find_value("shape");
        auto p0 = v.find('(');
        auto p1 = v.find(')', p0);
        std::string tup = v.substr(p0 + 1, p1 - p0 - 1);
        std::stringstream ss(tup);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            // trim
            tok.erase(0, tok.find_first_not_of(" \t"));
            tok.erase(tok.find_last_not_of(" \t") + 1);
            if (!tok.empty()) out.shape.push_back(std::stoi(tok));
        }
    }
    return out;
}

// Map (possibly 1/2/3/4-D) dims onto (n, c, h, w). 3-D HWC is detected by a
// strictly smallest trailing axis.
TensorF assemble(const std::vector<int>& shape, const std::vector<float>& flat,
                 const std::string& path) {
    if (shape.empty() || shape.size() > 4) throw IoError("unsupported array rank in " + path);
    int n = 1, c = 1, h = 1, w = 1;
    bool hwc = false;
    if (shape.size() == 1) {
        w = shape[0];
    } else if (shape.size() == 2) {
        h = shape[0]; w = shape[1];
    } else if (shape.size() == 3) {
        if (shape[2] < shape[0] && shape[2] < shape[1]) {
            hwc = true;
            h = shape[0]; w = shape[1]; c = shape[2];
        } else {
            c = shape[0]; h = shape[1]; w = shape[2];
        }
    } else {
        n = shape[0]; c = shape[1]; h = shape[2]; w = shape[3];
    }
    TensorF t(n, c, h, w);
    if (!hwc) {
        std::copy(flat.begin(), flat.end(), t.data.begin());
    } else {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int ci = 0; ci < c; ++ci)
                    t.at(0, ci, y, x) = flat[(static_cast<std::size_t>(y) * w + x) * c + ci];
    }
    return t;
}

}  // namespace

TensorF load_array(const std::string& path) {
    const std::string buf = read_file(path);
    if (buf.size() >= 4 && std::memcmp(buf.data(), "RAPT", 4) == 0) {
        if (buf.size() < 20) throw IoError("truncated RAPT header in " + path);
        std::uint32_t dims[4];
        std::memcpy(dims, buf.data() + 4, 16);
        const std::size_t count =
            static_cast<std::size_t>(dims[0]) * dims[1] * dims[2] * dims[3];
        if (buf.size() != 20 + count * 4) throw IoError("truncated RAPT payload in " + path);
        TensorF t(static_cast<int>(dims[0]), static_cast<int>(dims[1]), static_cast<int>(dims[2]),
                  static_cast<int>(dims[3]));
        std::memcpy(t.data.data(), buf.data() + 20, count * 4);
        return t;
    }
    if (buf.size() < 10 || std::memcmp(buf.data(), "\x93NUMPY", 6) != 0)
        throw IoError("bad magic in " + path + " (expected NPY or RAPT)");
    const unsigned major = static_cast<unsigned char>(buf[6]);
    if (major != 1) throw IoError("unsupported NPY version " + std::to_string(major) + " in " + path);
    const std::size_t hlen = static_cast<unsigned char>(buf[8]) |
                             (static_cast<std::size_t>(static_cast<unsigned char>(buf[9])) << 8);
    if (buf.size() < 10 + hlen) throw IoError("truncated NPY header in " + path);
    const NpyHeader hdr = parse_npy_header(buf.substr(10, hlen), path);
    if (hdr.fortran) throw IoError("Fortran-order NPY not supported: " + path);
    std::size_t count = 1;
    for (int d : hdr.shape) count *= static_cast<std::size_t>(d);
    const char* payload = buf.data() + 10 + hlen;
    const std::size_t avail = buf.size() - 10 - hlen;
    std::vector<float> flat(count);
    auto need = [&](std::size_t bytes) {
        if (avail < bytes) throw IoError("truncated NPY payload in " + path);
    };
    if (hdr.descr == "<f4") {
        need(count * 4);
        std::memcpy(flat.data(), payload, count * 4);
    } else if (hdr.descr == "<f8") {
        need(count * 8);
        for (std::size_t i = 0; i < count; ++i) {
            double v;
            std::memcpy(&v, payload + i * 8, 8);
            flat[i] = static_cast<float>(v);
        }
    } else if (hdr.descr == "<u2") {
        need(count * 2);
        for (std::size_t i = 0; i < count; ++i) {
            std::uint16_t v;
            std::memcpy(&v, payload + i * 2, 2);
            flat[i] = static_cast<float>(v);
        }
    } else if (hdr.descr == "|u1") {
        need(count);
        for (std::size_t i = 0; i < count; ++i)
            flat[i] = static_cast<float>(static_cast<unsigned char>(payload[i]));
    } else {
        throw IoError("unsupported NPY dtype '" + hdr.descr + "' in " + path);
    }
    return assemble(hdr.shape, flat, path);
}

namespace {
void write_npy(const std::string& path, const std::string& descr, const void* data,
               std::size_t elem_size, const std::vector<int>& shape, std::size_t count) {
    std::ostringstream shp;
    shp << "(";
    for (std::size_t i = 0; i < shape.size(); ++i) shp << shape[i] << ", ";
    shp << ")";
    std::string dict = "{'descr': '" + descr + "', 'fortran_order': False, 'shape': " + shp.str() + ", }";
    std::size_t total = 10 + dict.size() + 1;
    const std::size_t padded = (total + 63) / 64 * 64;
    dict.append(padded - total, ' ');
    dict.push_back('\n');
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path + " for writing");
    os.write("\x93NUMPY\x01\x00", 8);
    const std::uint16_t hlen = static_cast<std::uint16_t>(dict.size());
    os.put(static_cast<char>(hlen & 0xff));
    os.put(static_cast<char>(hlen >> 8));
    os.write(dict.data(), static_cast<std::streamsize>(dict.size()));
    os.write(static_cast<const char*>(data), static_cast<std::streamsize>(count * elem_size));
    if (!os) throw IoError("short write to " + path);
}
}  // namespace

void save_npy(const TensorF& t, const std::string& path) {
    write_npy(path, "<f4", t.data.data(), 4, {t.n, t.c, t.h, t.w},
              static_cast<std::size_t>(t.size()));
}

void save_npy(const TensorD& t, const std::string& path) {
    write_npy(path, "<f8", t.data.data(), 8, {t.n, t.c, t.h, t.w},
              static_cast<std::size_t>(t.size()));
}

void save_rapt(const TensorF& t, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path + " for writing");
    os.write("RAPT", 4);
    const std::uint32_t dims[4] = {static_cast<std::uint32_t>(t.n), static_cast<std::uint32_t>(t.c),
                                   static_cast<std::uint32_t>(t.h), static_cast<std::uint32_t>(t.w)};
    os.write(reinterpret_cast<const char*>(dims), 16);
    os.write(reinterpret_cast<const char*>(t.data.data()),
             static_cast<std::streamsize>(t.data.size() * 4));
    if (!os) throw IoError("short write to " + path);
}

// ---------- Wald protocol ----------

namespace {
std::vector<double> gaussian_kernel(double sigma) {
    const int r = std::max(1, static_cast<int>(std::ceil(3.5 * sigma)));
    std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
    double sum = 0.0;
    for (int i = -r; i <= r; ++i) {
        const double v = std::exp(-0.5 * i * i / (sigma * sigma));
        k[static_cast<std::size_t>(i + r)] = v;
        sum += v;
    }
    for (auto& v : k) v /= sum;
    return k;
}

int reflect(int i, int len) {
    if (len == 1) return 0;
    const int period = 2 * (len - 1);
    i = std::abs(i) % period;
    return i < len ? i : period - i;
}
}  // namespace

TensorF gaussian_blur(const TensorF& x, double sigma) {
    if (sigma <= 0.0) throw ValueError("gaussian_blur: sigma must be positive");
    const auto k = gaussian_kernel(sigma);
    const int r = static_cast<int>(k.size()) / 2;
    TensorF tmp = TensorF::zeros_like(x), out = TensorF::zeros_like(x);
    parallel_for(static_cast<std::int64_t>(x.n) * x.c, [&](std::int64_t idx) {
        const int ni = static_cast<int>(idx / x.c);
        const int ci = static_cast<int>(idx % x.c);
        for (int y = 0; y < x.h; ++y)
            for (int xx = 0; xx < x.w; ++xx) {
                double acc = 0.0;
                for (int t = -r; t <= r; ++t)
                    acc += k[static_cast<std::size_t>(t + r)] * x.at(ni, ci, y, reflect(xx + t, x.w));
                tmp.at(ni, ci, y, xx) = static_cast<float>(acc);
            }
        for (int y = 0; y < x.h; ++y)
            for (int xx = 0; xx < x.w; ++xx) {
                double acc = 0.0;
                for (int t = -r; t <= r; ++t)
                    acc += k[static_cast<std::size_t>(t + r)] * tmp.at(ni, ci, reflect(y + t, x.h), xx);
                out.at(ni, ci, y, xx) = static_cast<float>(acc);
            }
    });
    return out;
}

TensorF decimate(const TensorF& x, int r) {
    if (r < 1) throw ValueError("decimate: ratio must be >= 1");
    if (x.h % r != 0 || x.w % r != 0)
        throw ShapeError("decimate: dims " + x.shape_str() + " not divisible by " + std::to_string(r));
    const int off = (r - 1) / 2;
    TensorF out(x.n, x.c, x.h / r, x.w / r);
    for (int ni = 0; ni < x.n; ++ni)
        for (int ci = 0; ci < x.c; ++ci)
            for (int y = 0; y < out.h; ++y)
                for (int xx = 0; xx < out.w; ++xx)
                    out.at(ni, ci, y, xx) = x.at(ni, ci, y * r + off, xx * r + off);
    return out;
}

FusionPair wald_degrade(const TensorF& hrms, const TensorF& pan, const DegradeSpec& spec) {
    if (hrms.h % spec.ratio != 0 || hrms.w % spec.ratio != 0)
        throw ShapeError("wald_degrade: HRMS " + hrms.shape_str() + " not divisible by ratio " +
                         std::to_string(spec.ratio));
    if (pan.h != hrms.h || pan.w != hrms.w)
        throw ShapeError("wald_degrade: PAN " + pan.shape_str() + " must match HRMS scale");
    FusionPair out;
    out.ratio = spec.ratio;
    out.ms = decimate(gaussian_blur(hrms, spec.sigma()), spec.ratio);
    out.pan = pan;
    out.ref = hrms;
    return out;
}

// ---------- synthetic data ----------

std::vector<FusionPair> synth_dataset(std::uint64_t seed, int count, int size, int bands,
                                      const DegradeSpec& spec) {
    std::vector<FusionPair> out;
    out.reserve(static_cast<std::size_t>(count));
    Rng rng(seed);
    const double pi = 3.14159265358979323846;
    for (int s = 0; s < count; ++s) {
        TensorF hrms(1, bands, size, size);
        // shared smooth structure so bands are spectrally coherent
        const int waves = 4;
        std::vector<std::array<double, 4>> basis;
        for (int wv = 0; wv < waves; ++wv)
            basis.push_back({rng.uniform(0.5, 3.0), rng.uniform(0.5, 3.0),
                             rng.uniform(0.0, 2.0 * pi), rng.uniform(0.4, 1.0)});
        // a few sharp structures: step edge + bright blobs
        const double edge_pos = rng.uniform(0.25, 0.75);
        const double edge_gain = rng.uniform(0.15, 0.35);
        const int blobs = 3;
        std::vector<std::array<double, 3>> blob;
        for (int bl = 0; bl < blobs; ++bl)
            blob.push_back({rng.uniform(0.1, 0.9) * size, rng.uniform(0.1, 0.9) * size,
                            rng.uniform(1.5, 4.0)});
        for (int b = 0; b < bands; ++b) {
            const double band_gain = rng.uniform(0.6, 1.0);
            const double band_off = rng.uniform(0.05, 0.2);
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x) {
                    double v = band_off;
                    for (const auto& wv : basis)
                        v += 0.18 * wv[3] * band_gain *
                             (1.0 + std::sin(2.0 * pi * (wv[0] * y + wv[1] * x) / size + wv[2])) / 2.0;
                    if (x > edge_pos * size) v += edge_gain * band_gain;
                    for (const auto& bl : blob) {
                        const double d2 = (y - bl[0]) * (y - bl[0]) + (x - bl[1]) * (x - bl[1]);
                        v += 0.25 * band_gain * std::exp(-0.5 * d2 / (bl[2] * bl[2]));
                    }
                    v += 0.01 * (rng.uniform() - 0.5);
                    hrms.at(0, b, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
                }
        }
        // PAN: band average plus its high-pass detail, re-clamped
        TensorF pan(1, 1, size, size);
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                double m = 0.0;
                for (int b = 0; b < bands; ++b) m += hrms.at(0, b, y, x);
                pan.at(0, 0, y, x) = static_cast<float>(m / bands);
            }
        TensorF pan_lp = gaussian_blur(pan, 1.0);
        for (std::size_t i = 0; i < pan.data.size(); ++i) {
            const float hp = pan.data[i] - pan_lp.data[i];
            pan.data[i] = std::clamp(pan.data[i] + 0.6f * hp, 0.0f, 1.0f);
        }
        DegradeSpec sp = spec;
        FusionPair pair = wald_degrade(hrms, pan, sp);
        for (auto& v : pair.ms.data) v = std::clamp(v, 0.0f, 1.0f);
        pair.radiometric_max = 1.0f;
        pair.validate();
        out.push_back(std::move(pair));
    }
    return out;
}

// ---------- PNG export ----------

namespace {
std::uint32_t crc32_of(const unsigned char* data, std::size_t len, std::uint32_t seed = 0) {
    return static_cast<std::uint32_t>(
        ::crc32(seed, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(len)));
}

void put_be32(std::vector<unsigned char>& v, std::uint32_t x) {
    v.push_back(static_cast<unsigned char>(x >> 24));
    v.push_back(static_cast<unsigned char>(x >> 16));
    v.push_back(static_cast<unsigned char>(x >> 8));
    v.push_back(static_cast<unsigned char>(x));
}

void png_chunk(std::ofstream& os, const char type[4], const std::vector<unsigned char>& payload) {
    std::vector<unsigned char> head;
    put_be32(head, static_cast<std::uint32_t>(payload.size()));
    os.write(reinterpret_cast<const char*>(head.data()), 4);
    os.write(type, 4);
    if (!payload.empty())
        os.write(reinterpret_cast<const char*>(payload.data()),
                 static_cast<std::streamsize>(payload.size()));
    std::uint32_t crc = crc32_of(reinterpret_cast<const unsigned char*>(type), 4);
    if (!payload.empty()) crc = crc32_of(payload.data(), payload.size(), crc);
    std::vector<unsigned char> tail;
    put_be32(tail, crc);
    os.write(reinterpret_cast<const char*>(tail.data()), 4);
}
}  // namespace

void export_png(const TensorF& x, const std::vector<int>& bands, const std::string& path,
                double lo_pct, double hi_pct) {
    if (bands.size() != 1 && bands.size() != 3)
        throw ValueError("export_png: select 1 or 3 bands, got " + std::to_string(bands.size()));
    for (int b : bands)
        if (b < 0 || b >= x.c)
            throw ValueError("export_png: band " + std::to_string(b) + " out of range [0, " +
                             std::to_string(x.c - 1) + "]");
    // percentile stretch over the selected bands
    std::vector<float> vals;
    for (int b : bands)
        for (int y = 0; y < x.h; ++y)
            for (int xx = 0; xx < x.w; ++xx) vals.push_back(x.at(0, b, y, xx));
    std::sort(vals.begin(), vals.end());
    auto pct = [&](double p) {
        const std::size_t i = static_cast<std::size_t>(
            std::clamp(p / 100.0 * (vals.size() - 1), 0.0, static_cast<double>(vals.size() - 1)));
        return vals[i];
    };
    const float lo = pct(lo_pct);
    const float hi = std::max(pct(hi_pct), lo + 1e-12f);
    const int channels = static_cast<int>(bands.size());

    // raw scanlines with filter byte 0
    std::vector<unsigned char> raw;
    raw.reserve(static_cast<std::size_t>(x.h) * (1 + static_cast<std::size_t>(x.w) * channels));
    for (int y = 0; y < x.h; ++y) {
        raw.push_back(0);
        for (int xx = 0; xx < x.w; ++xx)
            for (int b : bands) {
                const double t = std::clamp((x.at(0, b, y, xx) - lo) / (hi - lo), 0.0f, 1.0f);
                raw.push_back(static_cast<unsigned char>(std::lround(t * 255.0)));
            }
    }
    uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
    std::vector<unsigned char> zdata(zlen);
    if (compress2(zdata.data(), &zlen, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw IoError("png: deflate failed for " + path);
    zdata.resize(zlen);

    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path + " for writing");
    const unsigned char sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    os.write(reinterpret_cast<const char*>(sig), 8);
    std::vector<unsigned char> ihdr;
    put_be32(ihdr, static_cast<std::uint32_t>(x.w));
    put_be32(ihdr, static_cast<std::uint32_t>(x.h));
    ihdr.push_back(8);                                   // bit depth
    ihdr.push_back(channels == 1 ? 0 : 2);               // gray / RGB
    ihdr.push_back(0); ihdr.push_back(0); ihdr.push_back(0);
    png_chunk(os, "IHDR", ihdr);
    png_chunk(os, "IDAT", zdata);
    png_chunk(os, "IEND", {});
    if (!os) throw IoError("short write to " + path);
}

// ---------- manifest ----------

std::vector<ManifestEntry> load_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open manifest " + path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw IoError("manifest " + path + ": " + e.what());
    }
    if (!j.is_array()) throw IoError("manifest " + path + " must be a JSON array");
    std::vector<ManifestEntry> out;
    for (const auto& e : j) {
        ManifestEntry m;
        m.pan = e.at("pan").get<std::string>();
        m.ms = e.at("ms").get<std::string>();
        if (e.contains("ref")) m.ref = e.at("ref").get<std::string>();
        out.push_back(std::move(m));
    }
    return out;
}

std::vector<FusionPair> load_pairs(const std::vector<ManifestEntry>& entries, int ratio,
                                   bool require_ref) {
    std::vector<FusionPair> out;
    for (const auto& e : entries) {
        FusionPair p;
        p.pan = load_array(e.pan);
        p.ms = load_array(e.ms);
        p.ratio = ratio;
        if (!e.ref.empty())
            p.ref = load_array(e.ref);
        else if (require_ref)
            throw ValueError("manifest entry for " + e.pan + " is missing the required reference");
        float peak = 1.0f;
        for (float v : p.pan.data) peak = std::max(peak, v);
        for (float v : p.ms.data) peak = std::max(peak, v);
        if (p.ref)
            for (float v : p.ref->data) peak = std::max(peak, v);
        p.radiometric_max = peak;
        p.validate();
        out.push_back(std::move(p));
    }
    return out;
}

void write_manifest(const std::vector<ManifestEntry>& entries, const std::string& path) {
    json j = json::array();
    for (const auto& e : entries) {
        json item = {{"pan", e.pan}, {"ms", e.ms}};
        if (!e.ref.empty()) item["ref"] = e.ref;
        j.push_back(item);
    }
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path + " for writing");
    os << j.dump(2) << "\n";
}

}  // namespace rapnet
