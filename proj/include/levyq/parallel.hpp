#pragma once

#include <atomic>
#include <cstdint>
#include <thread>
#include <vector>

namespace levyq {

inline int resolve_threads(int requested) {
    if (requested > 0) return requested;
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

// Runs fn(chunk_index, begin, end) over fixed-size chunks of [0, n). Workers
// pull chunk indices from a shared counter; each chunk writes only to its own
// slot, so results combined afterwards in chunk order do not depend on the
// thread count. All Monte Carlo reductions in this library go through here.
template <class ChunkFn>
void parallel_chunks(std::int64_t n, std::int64_t chunk_size, int threads, ChunkFn&& fn) {
    if (n <= 0) return;
    if (chunk_size <= 0) chunk_size = 1;
    const std::int64_t n_chunks = (n + chunk_size - 1) / chunk_size;
    threads = resolve_threads(threads);
    if (threads == 1 || n_chunks == 1) {
        for (std::int64_t c = 0; c < n_chunks; ++c)
            fn(c, c * chunk_size, std::min(n, (c + 1) * chunk_size));
        return;
    }
    std::atomic<std::int64_t> next{0};
    auto worker = [&]() {
        for (;;) {
            std::int64_t c = next.fetch_add(1);
            if (c >= n_chunks) return;
            fn(c, c * chunk_size, std::min(n, (c + 1) * chunk_size));
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
}

inline std::int64_t chunk_count(std::int64_t n, std::int64_t chunk_size) {
    if (n <= 0) return 0;
    if (chunk_size <= 0) chunk_size = 1;
    return (n + chunk_size - 1) / chunk_size;
}

}  // namespace levyq
