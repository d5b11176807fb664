#pragma once

// Shared helpers for the test binaries: random tensors, an independent
// triple-loop matmul, synthetic traffic-like series, and temp dirs.

#include <unistd.h>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>

#include "m3net/data.hpp"
#include "m3net/rng.hpp"
#include "m3net/tensor.hpp"

namespace m3test {

template <typename T>
m3net::Tensor<T> random_tensor(std::vector<std::size_t> shape, m3net::SplitMix64& rng,
                               double lo = -1.0, double hi = 1.0) {
    m3net::Tensor<T> t(std::move(shape));
    for (T& v : t.data) v = static_cast<T>(rng.next_real(lo, hi));
    return t;
}

// Textbook row-by-column product with a scalar accumulator; the reference the
// fast kernel must match exactly.
template <typename T>
m3net::Tensor<T> matmul_oracle(const m3net::Tensor<T>& a, const m3net::Tensor<T>& b) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    m3net::Tensor<T> c({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            T acc = T(0);
            for (std::size_t p = 0; p < k; ++p) acc += a.at(i, p) * b.at(p, j);
            c.at(i, j) = acc;
        }
    }
    return c;
}

template <typename T>
double max_abs_diff(const m3net::Tensor<T>& a, const m3net::Tensor<T>& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i)
        worst = std::max(worst,
                         std::abs(static_cast<double>(a.data[i]) - static_cast<double>(b.data[i])));
    return worst;
}

template <typename T>
bool bit_equal(const m3net::Tensor<T>& a, const m3net::Tensor<T>& b) {
    if (a.shape != b.shape) return false;
    for (std::size_t i = 0; i < a.numel(); ++i)
        if (std::memcmp(&a.data[i], &b.data[i], sizeof(T)) != 0) return false;
    return true;
}

// Traffic-shaped synthetic recording: positive daily/weekly periodic flow with
// per-node scale and deterministic noise.
template <typename T>
m3net::RawSeries<T> synthetic_series(std::size_t frames, std::size_t nodes,
                                     std::size_t channels, std::uint64_t seed,
                                     int interval_minutes = 5, int start_weekday = 0,
                                     double noise_amp = 4.0) {
    m3net::RawSeries<T> series;
    series.interval_minutes = interval_minutes;
    series.start_weekday = start_weekday;
    series.name = "synthetic";
    series.data = m3net::Tensor<T>({frames, nodes, channels});
    m3net::SplitMix64 rng(seed);
    std::vector<double> base(nodes), amp(nodes), phase(nodes);
    for (std::size_t n = 0; n < nodes; ++n) {
        base[n] = rng.next_real(120.0, 260.0);
        amp[n] = rng.next_real(30.0, 90.0);
        phase[n] = rng.next_real(0.0, 6.283185307179586);
    }
    const double per_day = 1440.0 / interval_minutes;
    for (std::size_t t = 0; t < frames; ++t) {
        const double day_pos = 6.283185307179586 * (static_cast<double>(t) / per_day);
        const double week_mod = 1.0 + 0.1 * std::sin(day_pos / 7.0);
        for (std::size_t n = 0; n < nodes; ++n) {
            const double noise = rng.next_real(-noise_amp, noise_amp);
            const double flow =
                std::max(1.0, week_mod * (base[n] + amp[n] * std::sin(day_pos + phase[n])) + noise);
            series.data.at(t, n, 0) = static_cast<T>(flow);
            for (std::size_t c = 1; c < channels; ++c)
                series.data.at(t, n, c) = static_cast<T>(0.02 * flow + rng.next_real(-0.5, 0.5));
        }
    }
    return series;
}

// Constant-flow recording (every frame the same value).
template <typename T>
m3net::RawSeries<T> constant_series(std::size_t frames, std::size_t nodes, double value,
                                    int interval_minutes = 5) {
    m3net::RawSeries<T> series;
    series.interval_minutes = interval_minutes;
    series.start_weekday = 0;
    series.name = "constant";
    series.data = m3net::Tensor<T>::full({frames, nodes, 1}, static_cast<T>(value));
    return series;
}

inline std::filesystem::path fresh_dir(const std::string& tag) {
    auto dir = std::filesystem::temp_directory_path() /
               ("m3net_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace m3test
