#ifndef UDASEG_CORE_PARALLEL_HPP
#define UDASEG_CORE_PARALLEL_HPP

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace udaseg {

/// Worker count: UDASEG_THREADS if set, otherwise hardware concurrency.
inline int thread_count() {
    static const int n = [] {
        if (const char* env = std::getenv("UDASEG_THREADS")) {
            const int v = std::atoi(env);
            if (v > 0) return v;
        }
        const unsigned hw = std::thread::hardware_concurrency();
        return hw == 0 ? 1 : static_cast<int>(hw);
    }();
    return n;
}

/// Run fn(i) for i in [0, n). Results must be written to disjoint locations;
/// chunking never affects output values, so runs are reproducible for any
/// worker count. The first exception thrown by any task is rethrown.
inline void parallel_for(int64_t n, const std::function<void(int64_t)>& fn) {
    if (n <= 0) return;
    const int workers = static_cast<int>(std::min<int64_t>(thread_count(), n));
    if (workers <= 1) {
        for (int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            const int64_t chunk = (n + workers - 1) / workers;
            const int64_t lo = w * chunk;
            const int64_t hi = std::min<int64_t>(n, lo + chunk);
            try {
                for (int64_t i = lo; i < hi; ++i) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

} // namespace udaseg

#endif // UDASEG_CORE_PARALLEL_HPP
