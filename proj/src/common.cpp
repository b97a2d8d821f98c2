#include "rapnet/common.hpp"

#include <algorithm>
#include <cstdlib>

namespace rapnet {

namespace {
std::atomic<int> g_threads{0};

int default_threads() {
    if (const char* env = std::getenv("RAPNET_THREADS")) {
        int n = std::atoi(env);
        if (n > 0) return n;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw ? static_cast<int>(hw) : 1;
}
}  // namespace

int num_threads() {
    int n = g_threads.load(std::memory_order_relaxed);
    return n > 0 ? n : default_threads();
}

void set_num_threads(int n) { g_threads.store(n, std::memory_order_relaxed); }

void parallel_for(std::int64_t count, const std::function<void(std::int64_t)>& fn) {
    int workers = std::min<std::int64_t>(num_threads(), count);
    if (workers <= 1 || count < 2) {
        for (std::int64_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    // Contiguous chunks, one per worker; chunk boundaries depend only on
    // (count, workers) so partitioning is reproducible.
    std::int64_t base = count / workers, rem = count % workers, start = 0;
    for (int t = 0; t < workers; ++t) {
        std::int64_t len = base + (t < rem ? 1 : 0);
        std::int64_t lo = start, hi = start + len;
        start = hi;
        pool.emplace_back([lo, hi, &fn] {
            for (std::int64_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace rapnet
