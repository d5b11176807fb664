#include "m3net/sysinfo.hpp"

#include <sys/resource.h>

#include <chrono>
#include <thread>

namespace m3net {

std::int64_t peak_rss_bytes() {
    rusage usage{};
    if (getrusage(RUSAGE_SELF, &usage) != 0) return 0;
    // ru_maxrss is KiB on Linux.
    return static_cast<std::int64_t>(usage.ru_maxrss) * 1024;
}

double now_seconds() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

int resolve_threads(int requested) {
    if (requested > 0) return requested;
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

}  // namespace m3net
