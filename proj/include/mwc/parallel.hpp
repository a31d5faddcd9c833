#pragma once

#include <cstddef>
#include <thread>
#include <vector>

namespace mwc {

inline int default_thread_count() {
    unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : static_cast<int>(n);
}

// Splits [0, n) into contiguous chunks, one per worker, and runs
// f(chunk_index, begin, end) on each. Results must be merged by the caller
// in chunk order so parallel output is identical to serial.
template <class F>
void parallel_chunks(std::size_t n, int threads, F&& f) {
    if (threads < 1) threads = 1;
    std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
    if (workers <= 1) {
        if (n > 0) f(0, std::size_t{0}, n);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        std::size_t begin = w * chunk;
        std::size_t end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&, w, begin, end] { f(w, begin, end); });
    }
    for (auto& t : pool) t.join();
}

}  // namespace mwc
