#pragma once

#include <algorithm>
#include <functional>
#include <thread>
#include <vector>

namespace deepmatch {

// Runs fn(begin, end) over contiguous chunks of [0, n) on `threads` workers.
// Workers own disjoint ranges, so results are bitwise independent of the
// thread count as long as fn only writes inside its range.
inline void parallel_chunks(int n, int threads,
                            const std::function<void(int, int)>& fn) {
    threads = std::max(1, std::min(threads, n));
    if (threads == 1 || n <= 1) {
        if (n > 0) fn(0, n);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(threads);
    const int chunk = (n + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
        int begin = t * chunk;
        int end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back(fn, begin, end);
    }
    for (auto& th : pool) th.join();
}

}  // namespace deepmatch
