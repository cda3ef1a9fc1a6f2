#pragma once

// Process-wide thread cap for target-stream evaluation. Streams are
// independent, so the result is identical for any thread count.

#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace styleset {

int thread_count();
void set_thread_count(int n);

// Runs f(i) for i in [0, n). Uses the configured thread cap; falls back to a
// plain loop when it is 1 or the range is trivial.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& f) {
    const int threads = thread_count();
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < n; i += workers) f(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace styleset
