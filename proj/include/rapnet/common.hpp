#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace rapnet {

// Error taxonomy mirrored by the CLI exit codes:
// usage -> 1, shape/data -> 2, numeric -> 3.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};
struct ValueError : std::runtime_error {
    explicit ValueError(const std::string& msg) : std::runtime_error(msg) {}
};
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Global worker-count cap shared by all ops. 0 means "hardware default".
// Parallel loops split work by index range only; every output element is
// produced by exactly one worker with a fixed inner loop order, so results
// are bit-identical for any thread count.
int num_threads();
void set_num_threads(int n);

// Runs fn(i) for i in [0, count). Serial when count is small or the cap is 1.
void parallel_for(std::int64_t count, const std::function<void(std::int64_t)>& fn);

// Deterministic uniform RNG used for all parameter init and data synthesis.
// Wraps a fixed-algorithm 64-bit generator; distributions are hand-rolled so
// streams do not depend on the standard library version.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

    std::uint64_t next_u64() {
        // xorshift64* (Vigna)
        std::uint64_t x = state_;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        state_ = x;
        return x * 0x2545f4914f6cdd1dull;
    }

    double uniform() {  // [0, 1)
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    std::uint64_t next_below(std::uint64_t n) { return n ? next_u64() % n : 0; }

    // Deterministic Fisher-Yates.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
};

}  // namespace rapnet
