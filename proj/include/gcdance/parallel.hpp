#pragma once

#include <cstdlib>
#include <thread>
#include <vector>

namespace gcdance {

// Evaluation parallelism cap; GCDANCE_THREADS overrides hardware concurrency.
inline int max_threads() {
    if (const char* env = std::getenv("GCDANCE_THREADS")) {
        int n = std::atoi(env);
        if (n >= 1) return n;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw ? static_cast<int>(hw) : 1;
}

// Static contiguous partition of [0, n); results must not depend on the
// partition (pure per-index work), which keeps seeded runs byte-identical
// under any thread count.
template <class Fn>
void parallel_for(std::int64_t n, Fn&& fn) {
    int threads = std::min<std::int64_t>(max_threads(), n);
    if (threads <= 1) {
        for (std::int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::int64_t chunk = (n + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
        std::int64_t lo = t * chunk;
        std::int64_t hi = std::min<std::int64_t>(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (std::int64_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace gcdance
