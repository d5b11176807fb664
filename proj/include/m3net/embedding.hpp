#pragma once

// Fuses a flattened history window with node, time-of-day, and day-of-week
// lookups into one representation per node. Column layout of the output is
// [feature | node | time-of-day | day-of-week].

#include <string>

#include "m3net/errors.hpp"
#include "m3net/param.hpp"
#include "m3net/tensor.hpp"

namespace m3net {

struct EmbeddingDims {
    int history_len = 12;   // L
    int channels = 1;       // C
    int feature_dim = 32;   // width of the projected history block
    int node_dim = 32;
    int tod_dim = 32;
    int dow_dim = 32;
    int tod_period = 288;   // intervals per day
    int dow_period = 7;

    int width() const { return feature_dim + node_dim + tod_dim + dow_dim; }
    int flat_input() const { return history_len * channels; }
};

template <typename T>
class EmbeddingLayer {
public:
    EmbeddingLayer() = default;

    EmbeddingLayer(ParamStore<T>& store, const EmbeddingDims& dims, std::size_t nodes,
                   const std::string& prefix = "embedding")
        : dims_(dims), nodes_(nodes) {
        const std::size_t in = static_cast<std::size_t>(dims.flat_input());
        feat_w_ = &store.create(prefix + ".feature.weight",
                                {in, static_cast<std::size_t>(dims.feature_dim)}, in);
        feat_b_ = &store.create(prefix + ".feature.bias",
                                {1, static_cast<std::size_t>(dims.feature_dim)}, in);
        node_table_ = &store.create(prefix + ".node_table",
                                    {nodes, static_cast<std::size_t>(dims.node_dim)},
                                    static_cast<std::size_t>(dims.node_dim));
        tod_table_ = &store.create(prefix + ".tod_table",
                                   {static_cast<std::size_t>(dims.tod_period),
                                    static_cast<std::size_t>(dims.tod_dim)},
                                   static_cast<std::size_t>(dims.tod_dim));
        dow_table_ = &store.create(prefix + ".dow_table",
                                   {static_cast<std::size_t>(dims.dow_period),
                                    static_cast<std::size_t>(dims.dow_dim)},
                                   static_cast<std::size_t>(dims.dow_dim));
    }

    struct Cache {
        Tensor<T> x_flat;  // nodes x (L*C)
        int tod = 0;
        int dow = 0;
    };

    // x: L x nodes x channels. Returns nodes x width.
    Tensor<T> forward(const Tensor<T>& x, int tod_idx, int dow_idx, Cache& cache) const {
        if (x.rank() != 3 || x.shape[0] != static_cast<std::size_t>(dims_.history_len) ||
            x.shape[1] != nodes_ || x.shape[2] != static_cast<std::size_t>(dims_.channels))
            throw ShapeError("embed: input " + x.shape_str() + ", expected " +
                             std::to_string(dims_.history_len) + "x" + std::to_string(nodes_) +
                             "x" + std::to_string(dims_.channels));
        if (tod_idx < 0 || tod_idx >= dims_.tod_period)
            throw BoundsError("time-of-day index " + std::to_string(tod_idx) +
                              " outside table of " + std::to_string(dims_.tod_period));
        if (dow_idx < 0 || dow_idx >= dims_.dow_period)
            throw BoundsError("day-of-week index " + std::to_string(dow_idx) +
                              " outside table of " + std::to_string(dims_.dow_period));

        // Per node, the history (all steps and channels) is flattened into one row.
        const std::size_t L = x.shape[0], C = x.shape[2];
        cache.x_flat = Tensor<T>({nodes_, L * C});
        for (std::size_t l = 0; l < L; ++l)
            for (std::size_t n = 0; n < nodes_; ++n)
                for (std::size_t c = 0; c < C; ++c)
                    cache.x_flat.at(n, l * C + c) = x.at(l, n, c);
        cache.tod = tod_idx;
        cache.dow = dow_idx;

        Tensor<T> feat = add_bias_rows(matmul(cache.x_flat, feat_w_->value), feat_b_->value);

        Tensor<T> out({nodes_, static_cast<std::size_t>(dims_.width())});
        const std::size_t df = dims_.feature_dim, dn = dims_.node_dim, dt = dims_.tod_dim,
                          dw = dims_.dow_dim;
        for (std::size_t n = 0; n < nodes_; ++n) {
            std::size_t off = 0;
            for (std::size_t j = 0; j < df; ++j) out.at(n, off + j) = feat.at(n, j);
            off += df;
            for (std::size_t j = 0; j < dn; ++j) out.at(n, off + j) = node_table_->value.at(n, j);
            off += dn;
            for (std::size_t j = 0; j < dt; ++j)
                out.at(n, off + j) = tod_table_->value.at(tod_idx, j);
            off += dt;
            for (std::size_t j = 0; j < dw; ++j)
                out.at(n, off + j) = dow_table_->value.at(dow_idx, j);
        }
        return out;
    }

    // Accumulates parameter gradients; the looked-up table rows are the only
    // table rows touched.
    void backward(const Cache& cache, const Tensor<T>& d_out, GradBuffer<T>& grads) const {
        const std::size_t df = dims_.feature_dim, dn = dims_.node_dim, dt = dims_.tod_dim,
                          dw = dims_.dow_dim;
        if (d_out.rank() != 2 || d_out.rows() != nodes_ ||
            d_out.cols() != static_cast<std::size_t>(dims_.width()))
            throw ShapeError("embed backward: gradient " + d_out.shape_str());

        Tensor<T> d_feat({nodes_, df});
        for (std::size_t n = 0; n < nodes_; ++n)
            for (std::size_t j = 0; j < df; ++j) d_feat.at(n, j) = d_out.at(n, j);
        grads.accumulate(*feat_w_, matmul_tn(cache.x_flat, d_feat));
        grads.accumulate(*feat_b_, colsum(d_feat));

        auto node_grad = grads.of(*node_table_);
        auto tod_grad = grads.of(*tod_table_);
        auto dow_grad = grads.of(*dow_table_);
        for (std::size_t n = 0; n < nodes_; ++n) {
            std::size_t off = df;
            for (std::size_t j = 0; j < dn; ++j) node_grad[n * dn + j] += d_out.at(n, off + j);
            off += dn;
            for (std::size_t j = 0; j < dt; ++j)
                tod_grad[static_cast<std::size_t>(cache.tod) * dt + j] += d_out.at(n, off + j);
            off += dt;
            for (std::size_t j = 0; j < dw; ++j)
                dow_grad[static_cast<std::size_t>(cache.dow) * dw + j] += d_out.at(n, off + j);
        }
    }

    const EmbeddingDims& dims() const { return dims_; }
    std::size_t nodes() const { return nodes_; }

private:
    EmbeddingDims dims_;
    std::size_t nodes_ = 0;
    Parameter<T>* feat_w_ = nullptr;
    Parameter<T>* feat_b_ = nullptr;
    Parameter<T>* node_table_ = nullptr;
    Parameter<T>* tod_table_ = nullptr;
    Parameter<T>* dow_table_ = nullptr;
};

}  // namespace m3net
