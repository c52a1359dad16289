#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace ustat {

inline int resolve_threads(int requested) {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// Run fn(block_index, lo, hi) over [0, total) split into fixed-size blocks.
// The block partition depends only on (total, block_size), never on the thread
// count, so index-addressed results are identical for any scheduling.
template <class F>
void parallel_blocks(std::uint64_t total, std::uint64_t block_size, int threads, F&& fn) {
    if (total == 0) return;
    const std::uint64_t n_blocks = (total + block_size - 1) / block_size;
    const int n_threads = resolve_threads(threads);
    if (n_threads <= 1 || n_blocks <= 1) {
        for (std::uint64_t b = 0; b < n_blocks; ++b) {
            const std::uint64_t lo = b * block_size;
            const std::uint64_t hi = std::min(total, lo + block_size);
            fn(b, lo, hi);
        }
        return;
    }
    std::atomic<std::uint64_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const std::uint64_t b = next.fetch_add(1, std::memory_order_relaxed);
            if (b >= n_blocks || failed.load(std::memory_order_relaxed)) return;
            const std::uint64_t lo = b * block_size;
            const std::uint64_t hi = std::min(total, lo + block_size);
            try {
                fn(b, lo, hi);
            } catch (...) {
                {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
                failed.store(true, std::memory_order_relaxed);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_threads));
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace ustat
