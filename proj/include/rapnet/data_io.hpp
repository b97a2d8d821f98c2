#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rapnet/ops.hpp"

namespace rapnet {

// One supervised (or unsupervised, when ref is absent) fusion sample.
struct FusionPair {
    TensorF pan;                  // (1, 1, H, W)
    TensorF ms;                   // (1, S, H/r, W/r)
    std::optional<TensorF> ref;   // (1, S, H, W)
    int ratio = 4;
    float radiometric_max = 1.0f;

    void validate() const;
};

// MTF-matched Gaussian degradation followed by r-fold decimation.
struct DegradeSpec {
    double gnyq = 0.3;  // amplitude of the blur MTF at the decimated Nyquist frequency
    int ratio = 4;

    // From exp(-2 pi^2 sigma^2 f^2) = GNyq at f = 1/(2r):
    //   sigma = (r / pi) * sqrt(-2 ln GNyq)
    double sigma() const;
};

// ---- array containers ----
// NPY v1.0 (C-order f32/f64/u16/u8) or raw "RAPT" (4 x u32 dims + LE f32).
// 3-D arrays are taken as (C,H,W) unless the last axis is strictly the
// smallest, in which case (H,W,C) is assumed and transposed on load.
TensorF load_array(const std::string& path);
void save_npy(const TensorF& t, const std::string& path);
void save_npy(const TensorD& t, const std::string& path);
void save_rapt(const TensorF& t, const std::string& path);

// ---- Wald-protocol simulation ----
TensorF gaussian_blur(const TensorF& x, double sigma);   // reflect padding
TensorF decimate(const TensorF& x, int r);               // phase offset (r-1)/2
FusionPair wald_degrade(const TensorF& hrms, const TensorF& pan, const DegradeSpec& spec);

// Seeded procedural dataset: smooth fields + edges + texture; PAN is a
// weighted band average plus high-frequency detail; values in [0, 1].
std::vector<FusionPair> synth_dataset(std::uint64_t seed, int count, int size, int bands,
                                      const DegradeSpec& spec = DegradeSpec{});

// 8-bit PNG with a percentile linear stretch; bands selects 1 or 3 channels.
void export_png(const TensorF& x, const std::vector<int>& bands, const std::string& path,
                double lo_pct = 1.0, double hi_pct = 99.0);

// Dataset manifest: JSON list of {"pan":..., "ms":..., "ref":...} entries.
struct ManifestEntry {
    std::string pan, ms, ref;  // ref may be empty
};
std::vector<ManifestEntry> load_manifest(const std::string& path);
std::vector<FusionPair> load_pairs(const std::vector<ManifestEntry>& entries, int ratio,
                                   bool require_ref);
void write_manifest(const std::vector<ManifestEntry>& entries, const std::string& path);

}  // namespace rapnet
