#pragma once

// Adam with step decay, the epoch loop with validation-based selection and
// early stopping, and the streaming batch update (chunk-parallel with a
// fixed reduction order, so runs are bit-reproducible).

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "m3net/data.hpp"
#include "m3net/errors.hpp"
#include "m3net/metrics.hpp"
#include "m3net/model.hpp"
#include "m3net/parallel.hpp"
#include "m3net/sysinfo.hpp"

namespace m3net {

struct TrainConfig {
    double lr0 = 0.002;
    int batch_size = 64;
    int max_epochs = 150;
    int decay_step = 30;       // epochs per decay
    double decay_gamma = 0.5;
    int patience = 30;         // epochs without val improvement before stopping
    std::uint64_t seed = 1;
    double mape_mask_threshold = 1.0;  // vehicles
    double clip_norm = 5.0;            // global gradient norm; 0 disables
    int threads = 0;                   // 0 = hardware concurrency
    bool mask_zero_targets = true;

    void validate() const {
        if (!(lr0 > 0)) throw ConfigError("train: lr0 must be positive");
        if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
        if (max_epochs < 1) throw ConfigError("train: max_epochs must be >= 1");
        if (decay_step < 1) throw ConfigError("train: decay_step must be >= 1");
        if (!(decay_gamma > 0 && decay_gamma <= 1))
            throw ConfigError("train: decay_gamma must be in (0, 1]");
        if (patience < 1) throw ConfigError("train: patience must be >= 1");
        if (clip_norm < 0) throw ConfigError("train: clip_norm must be >= 0");
    }
};

inline double lr_at(int epoch, const TrainConfig& cfg) {
    if (epoch < 0) throw ConfigError("lr_at: negative epoch");
    return cfg.lr0 * std::pow(cfg.decay_gamma, static_cast<double>(epoch / cfg.decay_step));
}

// Bias-corrected Adam over every parameter; gradients are zeroed afterward.
template <typename T>
void adam_step(ParamStore<T>& store, double lr, double beta1 = 0.9, double beta2 = 0.999,
               double eps = 1e-8) {
    for (std::size_t pi = 0; pi < store.size(); ++pi) {
        Parameter<T>& p = store[pi];
        for (std::size_t i = 0; i < p.numel(); ++i)
            if (!std::isfinite(static_cast<double>(p.grad.data[i])))
                throw NumericError("non-finite gradient in " + p.name);
        p.step_count += 1;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(p.step_count));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(p.step_count));
        for (std::size_t i = 0; i < p.numel(); ++i) {
            const double g = static_cast<double>(p.grad.data[i]);
            const double m = beta1 * static_cast<double>(p.adam_m.data[i]) + (1.0 - beta1) * g;
            const double v = beta2 * static_cast<double>(p.adam_v.data[i]) + (1.0 - beta2) * g * g;
            p.adam_m.data[i] = static_cast<T>(m);
            p.adam_v.data[i] = static_cast<T>(v);
            const double update = lr * (m / bc1) / (std::sqrt(v / bc2) + eps);
            p.value.data[i] = static_cast<T>(static_cast<double>(p.value.data[i]) - update);
            p.grad.data[i] = T(0);
        }
    }
}

// Scales all gradients so their global L2 norm is at most max_norm.
template <typename T>
double clip_grad_norm(ParamStore<T>& store, double max_norm) {
    double sq = 0.0;
    for (std::size_t pi = 0; pi < store.size(); ++pi)
        for (T g : store[pi].grad.data) sq += static_cast<double>(g) * static_cast<double>(g);
    const double norm = std::sqrt(sq);
    if (max_norm > 0 && norm > max_norm) {
        const T s = static_cast<T>(max_norm / norm);
        for (std::size_t pi = 0; pi < store.size(); ++pi)
            for (T& g : store[pi].grad.data) g *= s;
    }
    return norm;
}

struct EpochRecord {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_mae = 0.0;
    double val_rmse = 0.0;
    double val_mape = 0.0;
    double epoch_seconds = 0.0;
    std::int64_t peak_bytes = 0;
};

struct TrainHooks {
    // Replaces the step-decay schedule when set (test and experiment hook).
    std::function<double(int epoch)> lr_override;
    std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
    std::vector<EpochRecord> history;
    int best_epoch = -1;
    double best_val_mae = std::numeric_limits<double>::infinity();
};

namespace detail {

// One optimizer step over a batch. Per-sample gradients land in fixed-size
// chunk buffers that are reduced in chunk order. Returns (sum |err|, count).
template <typename T>
std::pair<double, std::size_t> batch_step(M3Net<T>& model, const WindowSet<T>& data,
                                          const std::vector<std::size_t>& batch,
                                          const NormStats& stats, bool mask_zero,
                                          int threads,
                                          std::vector<GradBuffer<T>>& chunk_buffers,
                                          std::vector<double>& chunk_loss) {
    // The gradient of the batch mean needs the unmasked count up front.
    std::size_t count = 0;
    const int horizon = model.config().horizon;
    for (std::size_t idx : batch) {
        WindowedSample<T> s = data.get(idx);
        if (!mask_zero) {
            count += s.y.numel();
        } else {
            for (T y : s.y.data)
                if (y != T(0)) ++count;
        }
    }

    const std::size_t n_chunks = chunk_count(batch.size());
    while (chunk_buffers.size() < n_chunks) chunk_buffers.emplace_back(model.store());
    chunk_loss.assign(n_chunks, 0.0);

    const double std0 = stats.std.at(0);
    const T grad_unit = count == 0 ? T(0) : static_cast<T>(std0 / static_cast<double>(count));

    parallel_chunks(batch.size(), threads, [&](std::size_t c, std::size_t begin,
                                               std::size_t end) {
        GradBuffer<T>& grads = chunk_buffers[c];
        grads.clear();
        double loss_sum = 0.0;
        typename M3Net<T>::Cache cache;
        for (std::size_t bi = begin; bi < end; ++bi) {
            WindowedSample<T> s = data.get(batch[bi]);
            Tensor<T> pred_norm = model.forward(s.x, s.tod_idx, s.dow_idx, cache);
            const std::size_t nodes = pred_norm.rows();
            Tensor<T> d_pred({nodes, static_cast<std::size_t>(horizon)});
            for (std::size_t n = 0; n < nodes; ++n) {
                for (int h = 0; h < horizon; ++h) {
                    const T y = s.y.at(h, n);
                    if (mask_zero && y == T(0)) continue;
                    const double pred_raw =
                        denormalize_flow(static_cast<double>(pred_norm.at(n, h)), stats);
                    const double diff = pred_raw - static_cast<double>(y);
                    loss_sum += std::abs(diff);
                    d_pred.at(n, h) = diff > 0 ? grad_unit : (diff < 0 ? -grad_unit : T(0));
                }
            }
            model.backward(cache, d_pred, grads);
        }
        chunk_loss[c] = loss_sum;
    });

    double loss_sum = 0.0;
    for (std::size_t c = 0; c < n_chunks; ++c) {
        loss_sum += chunk_loss[c];
        chunk_buffers[c].flush_to(model.store());
    }
    return {loss_sum, count};
}

}  // namespace detail

// Runs the full loop: shuffled batches, Adam at the scheduled rate, per-epoch
// validation, best-checkpoint tracking, patience-based early stop. The model
// is left holding the best-validation parameters.
template <typename T>
TrainResult train(M3Net<T>& model, const WindowSet<T>& train_set, const WindowSet<T>& val_set,
                  const NormStats& stats, const TrainConfig& cfg,
                  const TrainHooks& hooks = {}) {
    cfg.validate();
    if (train_set.empty()) throw ConfigError("train: empty training set");
    if (val_set.empty()) throw ConfigError("train: empty validation set");

    const int threads = resolve_threads(cfg.threads);
    std::vector<GradBuffer<T>> chunk_buffers;
    std::vector<double> chunk_loss;

    TrainResult result;
    std::vector<T> best_params = model.store().snapshot();
    int epochs_since_best = 0;

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        const double t0 = now_seconds();
        const double lr = hooks.lr_override ? hooks.lr_override(epoch) : lr_at(epoch, cfg);

        auto batches =
            make_batches(train_set.size(), static_cast<std::size_t>(cfg.batch_size), true,
                         cfg.seed, static_cast<std::uint64_t>(epoch));
        double abs_sum = 0.0;
        std::size_t abs_count = 0;
        for (std::size_t b = 0; b < batches.size(); ++b) {
            auto [loss_sum, count] =
                detail::batch_step(model, train_set, batches[b], stats,
                                   cfg.mask_zero_targets, threads, chunk_buffers, chunk_loss);
            if (!std::isfinite(loss_sum))
                throw NumericError("non-finite loss at epoch " + std::to_string(epoch) +
                                   ", batch " + std::to_string(b));
            abs_sum += loss_sum;
            abs_count += count;
            if (cfg.clip_norm > 0) clip_grad_norm(model.store(), cfg.clip_norm);
            adam_step(model.store(), lr);
        }

        MetricsReport val =
            evaluate(model, val_set, stats, cfg.mape_mask_threshold, threads);

        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = lr;
        rec.train_loss = abs_count == 0 ? 0.0 : abs_sum / static_cast<double>(abs_count);
        rec.val_mae = val.avg.mae;
        rec.val_rmse = val.avg.rmse;
        rec.val_mape = val.avg.mape;
        rec.epoch_seconds = now_seconds() - t0;
        rec.peak_bytes = peak_rss_bytes();
        result.history.push_back(rec);
        if (hooks.on_epoch) hooks.on_epoch(rec);

        if (val.avg.mae < result.best_val_mae) {
            result.best_val_mae = val.avg.mae;
            result.best_epoch = epoch;
            best_params = model.store().snapshot();
            epochs_since_best = 0;
        } else {
            ++epochs_since_best;
            if (epochs_since_best >= cfg.patience) break;
        }
    }

    model.store().restore(best_params);
    return result;
}

}  // namespace m3net
