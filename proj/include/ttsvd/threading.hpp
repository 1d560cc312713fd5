#pragma once

#include <cstdlib>
#include <thread>
#include <vector>

#include "ttsvd/shape.hpp"

namespace ttsvd {

/// Worker count: --threads flag, TTSVD_THREADS, then the logical core count.
inline int default_threads() {
    if (const char* env = std::getenv("TTSVD_THREADS")) {
        const int v = std::atoi(env);
        if (v >= 1) return v;
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return hc ? static_cast<int>(hc) : 1;
}

/// Contiguous, balanced partition of [0, n) into at most `workers` ranges.
/// The partition depends only on (n, workers), which pins determinism.
inline std::vector<std::pair<index_t, index_t>> partition_rows(index_t n, int workers) {
    if (workers < 1) workers = 1;
    const index_t w = std::min<index_t>(workers, std::max<index_t>(n, 1));
    std::vector<std::pair<index_t, index_t>> ranges;
    ranges.reserve(static_cast<std::size_t>(w));
    const index_t base = n / w, rem = n % w;
    index_t begin = 0;
    for (index_t i = 0; i < w; ++i) {
        const index_t len = base + (i < rem ? 1 : 0);
        ranges.emplace_back(begin, begin + len);
        begin += len;
    }
    return ranges;
}

/// Run f(worker_index, row_begin, row_end) over a contiguous partition of
/// [0, n). Workers touch disjoint ranges; the caller thread runs range 0.
template <class F>
void parallel_ranges(index_t n, int workers, F&& f) {
    const auto ranges = partition_rows(n, workers);
    if (ranges.size() == 1) {
        f(0, ranges[0].first, ranges[0].second);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(ranges.size() - 1);
    for (std::size_t w = 1; w < ranges.size(); ++w)
        pool.emplace_back([&, w] { f(static_cast<int>(w), ranges[w].first, ranges[w].second); });
    f(0, ranges[0].first, ranges[0].second);
    for (auto& t : pool) t.join();
}

} // namespace ttsvd
