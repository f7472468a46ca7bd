#pragma once

#include <cstdint>
#include <thread>
#include <vector>

namespace dashq {

/// Run fn(begin, end) over [0, n) split into contiguous chunks, one per
/// worker. Workers write disjoint output slots, so results are independent
/// of the thread count and schedule.
template <typename Fn>
void parallel_for(int64_t n, int threads, Fn&& fn) {
    if (threads <= 1 || n <= 1) {
        fn(int64_t{0}, n);
        return;
    }
    const int workers = static_cast<int>(std::min<int64_t>(threads, n));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    const int64_t chunk = (n + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        const int64_t begin = w * chunk;
        const int64_t end = std::min<int64_t>(begin + chunk, n);
        if (begin >= end) break;
        pool.emplace_back([&fn, begin, end] { fn(begin, end); });
    }
    for (auto& t : pool) t.join();
}

} // namespace dashq
