#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace dan {

/// Calls f(i) for i in [0, n) on up to `workers` threads, in contiguous
/// chunks. f must only write to slot i of its outputs; callers reduce in index
/// order afterwards so results do not depend on the worker count.
template <class F>
void parallel_for_index(std::size_t n, unsigned workers, F&& f) {
    if (workers <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    const std::size_t nt = std::min<std::size_t>(workers, n);
    const std::size_t chunk = (n + nt - 1) / nt;
    std::exception_ptr error;
    std::mutex error_mutex;
    {
        std::vector<std::jthread> threads;
        threads.reserve(nt);
        for (std::size_t t = 0; t < nt; ++t) {
            const std::size_t lo = t * chunk;
            const std::size_t hi = std::min(n, lo + chunk);
            if (lo >= hi) break;
            threads.emplace_back([&, lo, hi] {
                try {
                    for (std::size_t i = lo; i < hi; ++i) f(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            });
        }
    }
    if (error) std::rethrow_exception(error);
}

}  // namespace dan
