#pragma once

// Sensor-series ingestion: container IO, z-score statistics on the training
// portion, chronological splits, sliding windows with temporal indices, and
// deterministic batch ordering.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "m3net/binio.hpp"
#include "m3net/dataset_card.hpp"
#include "m3net/errors.hpp"
#include "m3net/rng.hpp"
#include "m3net/tensor.hpp"

namespace m3net {

inline constexpr char kRawMagic[] = "M3RAW1\n";  // 7 bytes on disk

template <typename T>
struct RawSeries {
    Tensor<T> data;  // frames x nodes x channels, channel 0 = flow
    int interval_minutes = 5;
    int start_weekday = 0;  // weekday of frame 0, 0 = Monday
    std::string name;

    std::size_t frames() const { return data.shape.at(0); }
    std::size_t nodes() const { return data.shape.at(1); }
    std::size_t channels() const { return data.shape.at(2); }
    int intervals_per_day() const { return 1440 / interval_minutes; }
};

template <typename T>
void save_raw(const std::string& path, const RawSeries<T>& series) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write container: " + path);
    write_bytes(out, kRawMagic, 7);
    write_u32(out, static_cast<std::uint32_t>(series.frames()));
    write_u32(out, static_cast<std::uint32_t>(series.nodes()));
    write_u32(out, static_cast<std::uint32_t>(series.channels()));
    write_u16(out, static_cast<std::uint16_t>(series.interval_minutes));
    write_u8(out, static_cast<std::uint8_t>(series.start_weekday));
    for (T v : series.data.data) write_f32(out, static_cast<float>(v));
    if (!out) throw IoError("write failed: " + path);
}

// Loads a container, validating against the card when one is given.
template <typename T>
RawSeries<T> load_raw(const std::string& path, const DatasetCard* card = nullptr) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("dataset not found: " + path);
    char magic[7];
    read_bytes(in, magic, 7, "container magic");
    if (std::string(magic, 7) != std::string(kRawMagic, 7))
        throw CorruptError("not a raw series container: " + path);
    RawSeries<T> series;
    const std::size_t frames = read_u32(in, "frame count");
    const std::size_t nodes = read_u32(in, "node count");
    const std::size_t channels = read_u32(in, "channel count");
    series.interval_minutes = read_u16(in, "interval");
    series.start_weekday = read_u8(in, "start weekday");
    if (frames == 0 || nodes == 0 || channels == 0)
        throw CorruptError("container declares an empty shape: " + path);
    if (series.interval_minutes <= 0 || 1440 % series.interval_minutes != 0)
        throw CorruptError("container interval does not divide a day: " +
                           std::to_string(series.interval_minutes));
    if (card) {
        if (nodes != card->nodes || frames != card->frames)
            throw IoError("dataset shape mismatch for " + card->name + ": expected " +
                          std::to_string(card->frames) + "x" + std::to_string(card->nodes) +
                          ", found " + std::to_string(frames) + "x" + std::to_string(nodes));
        if (series.interval_minutes != card->interval_minutes)
            throw IoError("dataset interval mismatch for " + card->name + ": expected " +
                          std::to_string(card->interval_minutes) + ", found " +
                          std::to_string(series.interval_minutes));
        if (series.start_weekday != card->start_weekday)
            throw IoError("dataset start weekday mismatch for " + card->name);
        series.name = card->name;
    }
    series.data = Tensor<T>({frames, nodes, channels});
    for (std::size_t i = 0; i < series.data.numel(); ++i) {
        float v = read_f32(in, "series values");
        if (!std::isfinite(v))
            throw IoError("non-finite value at frame " + std::to_string(i / (nodes * channels)) +
                          " in " + path);
        series.data.data[i] = static_cast<T>(v);
    }
    // Channel 0 is a count of vehicles per interval.
    for (std::size_t t = 0; t < frames; ++t)
        for (std::size_t n = 0; n < nodes; ++n)
            if (series.data.at(t, n, 0) < T(0))
                throw IoError("negative flow at frame " + std::to_string(t) + " in " + path);
    return series;
}

// ---------------------------------------------------------------------------

struct NormStats {
    std::vector<double> mean;  // per channel
    std::vector<double> std;   // per channel, always > 0
};

// z-score statistics over the first train_frames frames only.
template <typename T>
NormStats compute_stats(const RawSeries<T>& series, std::size_t train_frames) {
    if (train_frames == 0 || train_frames > series.frames())
        throw ConfigError("compute_stats: train portion of " + std::to_string(train_frames) +
                          " frames out of " + std::to_string(series.frames()));
    const std::size_t nodes = series.nodes(), channels = series.channels();
    NormStats stats;
    stats.mean.assign(channels, 0.0);
    stats.std.assign(channels, 0.0);
    const double count = static_cast<double>(train_frames * nodes);
    for (std::size_t t = 0; t < train_frames; ++t)
        for (std::size_t n = 0; n < nodes; ++n)
            for (std::size_t c = 0; c < channels; ++c)
                stats.mean[c] += static_cast<double>(series.data.at(t, n, c));
    for (std::size_t c = 0; c < channels; ++c) stats.mean[c] /= count;
    for (std::size_t t = 0; t < train_frames; ++t)
        for (std::size_t n = 0; n < nodes; ++n)
            for (std::size_t c = 0; c < channels; ++c) {
                const double d = static_cast<double>(series.data.at(t, n, c)) - stats.mean[c];
                stats.std[c] += d * d;
            }
    for (std::size_t c = 0; c < channels; ++c) {
        stats.std[c] = std::sqrt(stats.std[c] / count);
        if (stats.std[c] < 1e-8) stats.std[c] = 1.0;  // constant channel
    }
    return stats;
}

struct SplitSpec {
    double train_frac = 0.6;
    double val_frac = 0.2;
    double test_frac = 0.2;

    void validate() const {
        if (train_frac < 0 || val_frac < 0 || test_frac < 0 ||
            std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9)
            throw ConfigError("split fractions must be nonnegative and sum to 1");
    }
};

template <typename T>
struct WindowedSample {
    Tensor<T> x;  // L x nodes x channels, z-scored
    Tensor<T> y;  // F x nodes, raw-scale flow
    int tod_idx = 0;
    int dow_idx = 0;
};

// One chronological split's windows. Holds the shared normalized series and
// materializes per-sample copies on access; samples are ordered by anchor.
template <typename T>
class WindowSet {
public:
    WindowSet() = default;
    WindowSet(std::shared_ptr<const Tensor<T>> norm, std::shared_ptr<const Tensor<T>> raw_flow,
              std::vector<std::size_t> anchors, int L, int F, int tod_period, int start_weekday)
        : norm_(std::move(norm)), raw_flow_(std::move(raw_flow)), anchors_(std::move(anchors)),
          L_(L), F_(F), tod_period_(tod_period), start_weekday_(start_weekday) {}

    std::size_t size() const { return anchors_.size(); }
    bool empty() const { return anchors_.empty(); }

    // Anchor = index of the last history frame t; temporal indices are taken there.
    std::size_t anchor(std::size_t i) const { return anchors_.at(i); }
    int tod(std::size_t i) const { return static_cast<int>(anchors_.at(i) % tod_period_); }
    int dow(std::size_t i) const {
        return static_cast<int>((start_weekday_ + anchors_.at(i) / tod_period_) % 7);
    }

    WindowedSample<T> get(std::size_t i) const {
        const std::size_t t = anchors_.at(i);
        const std::size_t nodes = norm_->shape[1], channels = norm_->shape[2];
        WindowedSample<T> s;
        s.x = Tensor<T>({static_cast<std::size_t>(L_), nodes, channels});
        const std::size_t x0 = (t - L_ + 1) * nodes * channels;
        std::copy(norm_->data.begin() + x0, norm_->data.begin() + x0 + s.x.numel(),
                  s.x.data.begin());
        s.y = Tensor<T>({static_cast<std::size_t>(F_), nodes});
        const std::size_t y0 = (t + 1) * nodes;
        std::copy(raw_flow_->data.begin() + y0, raw_flow_->data.begin() + y0 + s.y.numel(),
                  s.y.data.begin());
        s.tod_idx = tod(i);
        s.dow_idx = dow(i);
        return s;
    }

    int history_len() const { return L_; }
    int horizon_len() const { return F_; }

private:
    std::shared_ptr<const Tensor<T>> norm_;
    std::shared_ptr<const Tensor<T>> raw_flow_;
    std::vector<std::size_t> anchors_;
    int L_ = 0, F_ = 0, tod_period_ = 1, start_weekday_ = 0;
};

template <typename T>
struct WindowSplits {
    WindowSet<T> train, val, test;
    NormStats stats;
};

inline std::size_t train_frame_count(std::size_t frames, const SplitSpec& split) {
    return static_cast<std::size_t>(static_cast<double>(frames) * split.train_frac);
}

// Splits frames chronologically, then slides windows inside each split: anchor
// t uses history [t-L+1, t] and targets (t, t+F]; no window straddles a split
// boundary. Splits with zero assigned frames stay empty; a nonempty split too
// short for even one window is an error.
template <typename T>
WindowSplits<T> make_windows(const RawSeries<T>& series, int L, int F, int channels_used,
                             const NormStats& stats, const SplitSpec& split) {
    split.validate();
    if (L < 1 || F < 1) throw ConfigError("window lengths must be positive");
    const std::size_t frames = series.frames(), nodes = series.nodes();
    if (static_cast<std::size_t>(L + F) > frames)
        throw ConfigError("series of " + std::to_string(frames) +
                          " frames cannot hold a " + std::to_string(L + F) + "-frame window");
    if (channels_used < 1 || static_cast<std::size_t>(channels_used) > series.channels())
        throw ConfigError("channels_used " + std::to_string(channels_used) + " out of range");
    if (stats.mean.size() < static_cast<std::size_t>(channels_used))
        throw ConfigError("stats cover " + std::to_string(stats.mean.size()) +
                          " channels, need " + std::to_string(channels_used));

    const std::size_t cu = static_cast<std::size_t>(channels_used);
    auto norm = std::make_shared<Tensor<T>>(
        std::vector<std::size_t>{frames, nodes, cu});
    for (std::size_t t = 0; t < frames; ++t)
        for (std::size_t n = 0; n < nodes; ++n)
            for (std::size_t c = 0; c < cu; ++c)
                norm->at(t, n, c) = static_cast<T>(
                    (static_cast<double>(series.data.at(t, n, c)) - stats.mean[c]) /
                    stats.std[c]);
    auto raw_flow = std::make_shared<Tensor<T>>(std::vector<std::size_t>{frames, nodes});
    for (std::size_t t = 0; t < frames; ++t)
        for (std::size_t n = 0; n < nodes; ++n) raw_flow->at(t, n) = series.data.at(t, n, 0);

    const std::size_t n_train = train_frame_count(frames, split);
    const std::size_t n_val = static_cast<std::size_t>(static_cast<double>(frames) * split.val_frac);
    const std::size_t bounds[4] = {0, n_train, n_train + n_val, frames};

    WindowSplits<T> out;
    out.stats = stats;
    WindowSet<T>* sets[3] = {&out.train, &out.val, &out.test};
    const char* names[3] = {"train", "val", "test"};
    for (int s = 0; s < 3; ++s) {
        const std::size_t begin = bounds[s], end = bounds[s + 1];
        std::vector<std::size_t> anchors;
        if (end > begin) {
            if (end - begin < static_cast<std::size_t>(L + F))
                throw ConfigError(std::string("split ") + names[s] + " has " +
                                  std::to_string(end - begin) +
                                  " frames, too short for one window");
            for (std::size_t t = begin + L - 1; t + F < end; ++t) anchors.push_back(t);
        }
        *sets[s] = WindowSet<T>(norm, raw_flow, std::move(anchors), L, F,
                                series.intervals_per_day(), series.start_weekday);
    }
    return out;
}

// Deterministic batch index order. Shuffle permutes per (seed, epoch); the
// final partial batch is kept. Evaluation passes shuffle = false.
inline std::vector<std::vector<std::size_t>> make_batches(std::size_t n,
                                                          std::size_t batch_size,
                                                          bool shuffle, std::uint64_t seed,
                                                          std::uint64_t epoch) {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    std::vector<std::size_t> order;
    if (shuffle) {
        order = shuffled_indices(n, seed, epoch);
    } else {
        order.resize(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
    }
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t b = 0; b < n; b += batch_size) {
        const std::size_t e = std::min(n, b + batch_size);
        batches.emplace_back(order.begin() + b, order.begin() + e);
    }
    return batches;
}

// Undo the z-score on the flow channel.
inline double denormalize_flow(double v, const NormStats& stats) {
    return v * stats.std.at(0) + stats.mean.at(0);
}

}  // namespace m3net
