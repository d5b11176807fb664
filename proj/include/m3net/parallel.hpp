#pragma once

// Chunked fan-out over a range of items. Work is split into fixed-size chunks
// whose identity does not depend on the worker count, so any chunk-indexed
// reduction stays deterministic no matter how many threads run.

#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace m3net {

inline constexpr std::size_t kWorkChunk = 8;

inline std::size_t chunk_count(std::size_t items, std::size_t chunk = kWorkChunk) {
    return (items + chunk - 1) / chunk;
}

// fn(chunk_index, begin, end) is called once per chunk, possibly concurrently.
inline void parallel_chunks(std::size_t items, int threads,
                            const std::function<void(std::size_t, std::size_t, std::size_t)>& fn,
                            std::size_t chunk = kWorkChunk) {
    const std::size_t n_chunks = chunk_count(items, chunk);
    if (n_chunks == 0) return;
    const int workers = std::min<std::size_t>(std::max(threads, 1), n_chunks);

    if (workers == 1) {
        for (std::size_t c = 0; c < n_chunks; ++c)
            fn(c, c * chunk, std::min(items, (c + 1) * chunk));
        return;
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto body = [&] {
        for (;;) {
            const std::size_t c = next.fetch_add(1);
            if (c >= n_chunks) return;
            try {
                fn(c, c * chunk, std::min(items, (c + 1) * chunk));
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) pool.emplace_back(body);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace m3net
