#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rapnet/tensor.hpp"

namespace rapnet {

// All metrics run in f64 on single-image (1, S, H, W) tensors.

struct SamResult {
    double degrees = 0.0;
    bool all_zero_warning = false;  // both images identically zero
};

SamResult sam(const TensorD& fused, const TensorD& ref);
double ergas(const TensorD& fused, const TensorD& ref, int ratio);

struct SccResult {
    double value = 0.0;
    int skipped_bands = 0;  // zero-variance high-pass bands
};
SccResult scc(const TensorD& fused, const TensorD& ref);

// Scalar universal image quality index averaged over block x block windows
// stepped by shift. Degenerate blocks: both variances zero -> 1 when the
// means are equal, 0 otherwise; both means zero with signal -> the luminance
// term is taken as its limit 1.
double uiqi(const TensorD& a, const TensorD& b, int block = 32, int shift = 32);

// Hypercomplex (Cayley-Dickson) extension of UIQI to 2^n bands; band count
// is zero-padded to the next power of 2.
double q2n(const TensorD& fused, const TensorD& ref, int block = 32, int shift = 32);

struct FullResResult {
    double d_lambda = 0.0;
    double d_s = 0.0;
    double qnr = 0.0;
};

// No-reference protocol at full resolution. pan_degraded_sigma_gnyq drives
// the PAN -> MS-scale degradation (same operator as data simulation).
FullResResult full_res_suite(const TensorD& fused, const TensorD& ms, const TensorD& pan,
                             int ratio, double gnyq = 0.3);

// Per-image values plus mean and population std for one metric set.
struct MetricsReport {
    enum class Kind { Reduced, Full };
    Kind kind = Kind::Reduced;
    std::vector<std::string> metric_names;
    std::vector<std::vector<double>> per_image;  // [image][metric]
    std::vector<double> mean, stddev;

    void finalize();  // fills mean/stddev from per_image
    std::string summary_lines() const;  // "metric: mean±std" per metric
    void write_json(const std::string& path) const;
    void write_csv(const std::string& path) const;
};

MetricsReport reduced_report(const std::vector<TensorD>& fused, const std::vector<TensorD>& refs,
                             int ratio);
MetricsReport full_report(const std::vector<TensorD>& fused, const std::vector<TensorD>& ms,
                          const std::vector<TensorD>& pan, int ratio, double gnyq = 0.3);

}  // namespace rapnet
