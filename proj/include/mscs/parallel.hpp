#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace mscs {

/**
 * Run fn(i) for i in [0, n) on up to n_threads workers. Each index is claimed
 * exactly once through an atomic counter; fn must write results only into its
 * own slot so output is independent of scheduling. The first exception thrown
 * by any worker is rethrown on the calling thread after all workers join.
 */
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                         unsigned n_threads = 0) {
    if (n == 0) return;
    if (n_threads == 0) n_threads = std::thread::hardware_concurrency();
    if (n_threads <= 1 || n == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    n_threads = static_cast<unsigned>(std::min<std::size_t>(n_threads, n));

    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;

    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };

    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace mscs
