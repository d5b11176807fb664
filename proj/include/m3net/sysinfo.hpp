#pragma once

#include <cstdint>

namespace m3net {

// Peak resident set size of this process, in bytes.
std::int64_t peak_rss_bytes();

// Monotonic wall clock in seconds.
double now_seconds();

// Worker count to use: explicit request, else hardware concurrency.
int resolve_threads(int requested);

}  // namespace m3net
