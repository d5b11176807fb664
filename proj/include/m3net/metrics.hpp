#pragma once

// Horizon-wise evaluation (MAE / RMSE / MAPE at selected steps and averaged
// over the whole horizon) and the masked mean-absolute-error training loss.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "m3net/data.hpp"
#include "m3net/errors.hpp"
#include "m3net/model.hpp"
#include "m3net/parallel.hpp"
#include "m3net/sysinfo.hpp"
#include "m3net/tensor.hpp"

namespace m3net {

struct MetricCell {
    double mae = 0.0;
    double rmse = 0.0;
    double mape = 0.0;  // percent
};

struct MetricsReport {
    std::vector<MetricCell> per_horizon;  // index h-1
    MetricCell avg;                       // per-entry average over all horizons
    double eval_seconds = 0.0;
    std::int64_t peak_resident_bytes = 0;

    // Cell for a 1-based horizon; the conventional summary steps are 3, 6, 12.
    const MetricCell& at_horizon(int h) const {
        if (h < 1 || static_cast<std::size_t>(h) > per_horizon.size())
            throw ConfigError("no metrics for horizon " + std::to_string(h));
        return per_horizon[static_cast<std::size_t>(h) - 1];
    }
};

// Mean |pred - target| over unmasked entries of a batch. Targets of exactly 0
// are treated as missing when mask_zero is set. The gradient is
// sign(pred - target) / count on unmasked entries, 0 elsewhere and at ties.
template <typename T>
struct MaskedMaeResult {
    double value = 0.0;
    Tensor<T> grad;
    std::size_t count = 0;
};

template <typename T>
MaskedMaeResult<T> masked_mae_loss(const Tensor<T>& pred_raw, const Tensor<T>& target_raw,
                                   bool mask_zero = true) {
    if (!pred_raw.same_shape(target_raw))
        throw ShapeError("masked_mae_loss: " + pred_raw.shape_str() + " vs " +
                         target_raw.shape_str());
    MaskedMaeResult<T> out;
    out.grad = Tensor<T>(pred_raw.shape);
    double sum = 0.0;
    for (std::size_t i = 0; i < pred_raw.numel(); ++i) {
        if (mask_zero && target_raw.data[i] == T(0)) continue;
        sum += std::abs(static_cast<double>(pred_raw.data[i]) -
                        static_cast<double>(target_raw.data[i]));
        ++out.count;
    }
    if (out.count == 0) {
        out.value = 0.0;  // fully masked batch; callers may warn
        return out;
    }
    out.value = sum / static_cast<double>(out.count);
    const T inv = static_cast<T>(1.0 / static_cast<double>(out.count));
    for (std::size_t i = 0; i < pred_raw.numel(); ++i) {
        if (mask_zero && target_raw.data[i] == T(0)) continue;
        const T d = pred_raw.data[i] - target_raw.data[i];
        out.grad.data[i] = d > T(0) ? inv : (d < T(0) ? -inv : T(0));
    }
    return out;
}

namespace detail {

struct HorizonSums {
    double abs = 0.0;
    double sq = 0.0;
    double ratio = 0.0;  // |e|/|y| over entries passing the MAPE mask
    std::size_t count = 0;
    std::size_t mape_count = 0;

    void merge(const HorizonSums& o) {
        abs += o.abs;
        sq += o.sq;
        ratio += o.ratio;
        count += o.count;
        mape_count += o.mape_count;
    }

    MetricCell cell() const {
        MetricCell c;
        if (count > 0) {
            c.mae = abs / static_cast<double>(count);
            c.rmse = std::sqrt(sq / static_cast<double>(count));
        }
        if (mape_count > 0) c.mape = 100.0 * ratio / static_cast<double>(mape_count);
        return c;
    }
};

}  // namespace detail

// Evaluates raw-scale predictions against raw targets over a whole split.
// MAPE skips entries with |target| <= mape_mask_threshold.
template <typename T>
MetricsReport evaluate(const M3Net<T>& model, const WindowSet<T>& samples,
                       const NormStats& stats, double mape_mask_threshold = 1.0,
                       int threads = 1) {
    if (samples.empty()) throw ConfigError("evaluate: empty sample set");
    const double t0 = now_seconds();
    const int horizon = model.config().horizon;
    const std::size_t n_chunks = chunk_count(samples.size());
    std::vector<std::vector<detail::HorizonSums>> chunk_sums(
        n_chunks, std::vector<detail::HorizonSums>(horizon));

    parallel_chunks(samples.size(), threads, [&](std::size_t c, std::size_t begin,
                                                 std::size_t end) {
        auto& sums = chunk_sums[c];
        for (std::size_t i = begin; i < end; ++i) {
            WindowedSample<T> s = samples.get(i);
            Tensor<T> pred = model.predict(s.x, s.tod_idx, s.dow_idx, stats);
            const std::size_t nodes = pred.rows();
            for (int h = 0; h < horizon; ++h) {
                auto& hs = sums[h];
                for (std::size_t n = 0; n < nodes; ++n) {
                    const double y = static_cast<double>(s.y.at(h, n));
                    const double e = static_cast<double>(pred.at(n, h)) - y;
                    hs.abs += std::abs(e);
                    hs.sq += e * e;
                    hs.count += 1;
                    if (std::abs(y) > mape_mask_threshold) {
                        hs.ratio += std::abs(e) / std::abs(y);
                        hs.mape_count += 1;
                    }
                }
            }
        }
    });

    MetricsReport report;
    report.per_horizon.resize(horizon);
    detail::HorizonSums total;
    std::vector<detail::HorizonSums> merged(horizon);
    for (std::size_t c = 0; c < n_chunks; ++c)
        for (int h = 0; h < horizon; ++h) merged[h].merge(chunk_sums[c][h]);
    for (int h = 0; h < horizon; ++h) {
        report.per_horizon[h] = merged[h].cell();
        total.merge(merged[h]);
    }
    report.avg = total.cell();
    report.eval_seconds = now_seconds() - t0;
    report.peak_resident_bytes = peak_rss_bytes();
    return report;
}

// Table-style text report: rows MAE/RMSE/MAPE, columns @3/@6/@12/Avg (falling
// back to whatever horizons exist).
std::string format_metrics_report(const MetricsReport& report);

}  // namespace m3net
