#pragma once

// One mixing block: a spatial step that aggregates nodes into learned groups,
// transforms the group rows with a shared two-layer perceptron and scatters
// them back (with residual), then a channel step that blends K expert
// perceptrons per node under a softmax gate (with optional residual).

#include <string>
#include <vector>

#include "m3net/errors.hpp"
#include "m3net/param.hpp"
#include "m3net/tensor.hpp"

namespace m3net {

enum class Variant { Full, NoMoe, NoSpatial, NoGrouping };

inline const char* variant_name(Variant v) {
    switch (v) {
        case Variant::Full: return "full";
        case Variant::NoMoe: return "no_moe";
        case Variant::NoSpatial: return "no_spatial";
        case Variant::NoGrouping: return "no_grouping";
    }
    return "full";
}

inline Variant parse_variant(const std::string& s) {
    if (s == "full") return Variant::Full;
    if (s == "no_moe") return Variant::NoMoe;
    if (s == "no_spatial") return Variant::NoSpatial;
    if (s == "no_grouping") return Variant::NoGrouping;
    throw ConfigError("unknown variant: " + s +
                      " (expected full, no_moe, no_spatial or no_grouping)");
}

// Two-layer perceptron applied to matrix rows: relu(x*W1 + b1)*W2 + b2.
template <typename T>
struct RowMlp {
    Parameter<T>* w1 = nullptr;
    Parameter<T>* b1 = nullptr;
    Parameter<T>* w2 = nullptr;
    Parameter<T>* b2 = nullptr;

    RowMlp() = default;
    RowMlp(ParamStore<T>& store, const std::string& prefix, std::size_t dim) {
        w1 = &store.create(prefix + ".w1", {dim, dim}, dim);
        b1 = &store.create(prefix + ".b1", {1, dim}, dim);
        w2 = &store.create(prefix + ".w2", {dim, dim}, dim);
        b2 = &store.create(prefix + ".b2", {1, dim}, dim);
    }

    struct Cache {
        Tensor<T> input;
        Tensor<T> pre_act;  // input*W1 + b1, before relu
        Tensor<T> hidden;   // relu(pre_act)
    };

    Tensor<T> forward(const Tensor<T>& x, Cache& cache) const {
        cache.input = x;
        cache.pre_act = add_bias_rows(matmul(x, w1->value), b1->value);
        cache.hidden = relu(cache.pre_act);
        return add_bias_rows(matmul(cache.hidden, w2->value), b2->value);
    }

    // Returns the gradient w.r.t. the input.
    Tensor<T> backward(const Cache& cache, const Tensor<T>& d_out, GradBuffer<T>& grads) const {
        grads.accumulate(*w2, matmul_tn(cache.hidden, d_out));
        grads.accumulate(*b2, colsum(d_out));
        Tensor<T> d_hidden = matmul_nt(d_out, w2->value);
        Tensor<T> d_pre = relu_backward(cache.pre_act, d_hidden);
        grads.accumulate(*w1, matmul_tn(cache.input, d_pre));
        grads.accumulate(*b1, colsum(d_pre));
        return matmul_nt(d_pre, w1->value);
    }
};

// ---------------------------------------------------------------------------
// Spatial step

template <typename T>
class SpatialMlp {
public:
    SpatialMlp() = default;

    SpatialMlp(ParamStore<T>& store, const std::string& prefix, std::size_t nodes,
               std::size_t groups, std::size_t dim, bool softmax_grouping, bool bypass_grouping)
        : nodes_(nodes), groups_(groups), softmax_grouping_(softmax_grouping),
          bypass_grouping_(bypass_grouping) {
        grouping_ = &store.create(prefix + ".grouping", {nodes, groups}, groups);
        mlp_ = RowMlp<T>(store, prefix + ".mlp", dim);
    }

    struct Cache {
        Tensor<T> input;
        Tensor<T> grouping_used;  // after optional row softmax
        Tensor<T> grouped;        // groups x dim
        Tensor<T> mixed_groups;   // mlp output on group rows
        typename RowMlp<T>::Cache mlp;
    };

    // H -> H + G * mlp(G^T * H); with grouping bypassed, H -> H + mlp(H).
    Tensor<T> forward(const Tensor<T>& h, Cache& cache) const {
        if (h.rank() != 2 || h.rows() != nodes_)
            throw ShapeError("spatial_mix: input " + h.shape_str() + " against grouping " +
                             grouping_->value.shape_str());
        cache.input = h;
        if (bypass_grouping_) {
            Tensor<T> mixed = mlp_.forward(h, cache.mlp);
            return add(h, mixed);
        }
        cache.grouping_used =
            softmax_grouping_ ? softmax_rows(grouping_->value) : grouping_->value;
        cache.grouped = matmul_tn(cache.grouping_used, h);
        cache.mixed_groups = mlp_.forward(cache.grouped, cache.mlp);
        Tensor<T> scattered = matmul(cache.grouping_used, cache.mixed_groups);
        return add(h, scattered);
    }

    Tensor<T> backward(const Cache& cache, const Tensor<T>& d_out, GradBuffer<T>& grads) const {
        if (bypass_grouping_) {
            Tensor<T> d_h = mlp_.backward(cache.mlp, d_out, grads);
            add_into(d_h, d_out);  // residual
            return d_h;
        }
        // scattered = Gu * mixed_groups
        Tensor<T> d_grouping = matmul_nt(d_out, cache.mixed_groups);
        Tensor<T> d_mixed = matmul_tn(cache.grouping_used, d_out);
        Tensor<T> d_grouped = mlp_.backward(cache.mlp, d_mixed, grads);
        // grouped = Gu^T * H contributes to both H and Gu
        Tensor<T> d_h = matmul(cache.grouping_used, d_grouped);
        add_into(d_grouping, matmul_nt(cache.input, d_grouped));
        if (softmax_grouping_)
            d_grouping = softmax_rows_backward(cache.grouping_used, d_grouping);
        grads.accumulate(*grouping_, d_grouping);
        add_into(d_h, d_out);  // residual
        return d_h;
    }

    const Parameter<T>& grouping() const { return *grouping_; }
    bool bypasses_grouping() const { return bypass_grouping_; }

private:
    std::size_t nodes_ = 0;
    std::size_t groups_ = 0;
    bool softmax_grouping_ = false;
    bool bypass_grouping_ = false;
    Parameter<T>* grouping_ = nullptr;
    RowMlp<T> mlp_;
};

// ---------------------------------------------------------------------------
// Channel step: dense mixture of experts, all K experts always evaluated

template <typename T>
class ChannelMoe {
public:
    ChannelMoe() = default;

    ChannelMoe(ParamStore<T>& store, const std::string& prefix, std::size_t dim,
               std::size_t experts, bool residual)
        : experts_(experts), residual_(residual) {
        gate_w_ = &store.create(prefix + ".gate.weight", {dim, experts}, dim);
        gate_b_ = &store.create(prefix + ".gate.bias", {1, experts}, dim);
        expert_mlps_.reserve(experts);
        for (std::size_t k = 0; k < experts; ++k)
            expert_mlps_.emplace_back(store, prefix + ".expert" + std::to_string(k), dim);
    }

    struct Cache {
        Tensor<T> input;
        Tensor<T> gate;  // softmax weights, nodes x K
        std::vector<Tensor<T>> expert_out;
        std::vector<typename RowMlp<T>::Cache> expert_cache;
    };

    // H_s -> [H_s +] sum_k gate[:,k] (.) expert_k(H_s)
    Tensor<T> forward(const Tensor<T>& h, Cache& cache) const {
        cache.input = h;
        cache.gate = softmax_rows(add_bias_rows(matmul(h, gate_w_->value), gate_b_->value));
        cache.expert_out.resize(experts_);
        cache.expert_cache.resize(experts_);
        Tensor<T> mix({h.rows(), h.cols()});
        for (std::size_t k = 0; k < experts_; ++k) {
            cache.expert_out[k] = expert_mlps_[k].forward(h, cache.expert_cache[k]);
            for (std::size_t i = 0; i < h.rows(); ++i) {
                const T a = cache.gate.at(i, k);
                for (std::size_t j = 0; j < h.cols(); ++j)
                    mix.at(i, j) += a * cache.expert_out[k].at(i, j);
            }
        }
        return residual_ ? add(h, mix) : mix;
    }

    Tensor<T> backward(const Cache& cache, const Tensor<T>& d_out, GradBuffer<T>& grads) const {
        const std::size_t rows = cache.input.rows(), cols = cache.input.cols();
        Tensor<T> d_h({rows, cols});
        if (residual_) d_h = d_out;

        Tensor<T> d_gate({rows, experts_});
        for (std::size_t k = 0; k < experts_; ++k) {
            // mix += gate[:,k] (.) O_k
            Tensor<T> d_expert({rows, cols});
            for (std::size_t i = 0; i < rows; ++i) {
                const T a = cache.gate.at(i, k);
                T dot = T(0);
                for (std::size_t j = 0; j < cols; ++j) {
                    d_expert.at(i, j) = a * d_out.at(i, j);
                    dot += d_out.at(i, j) * cache.expert_out[k].at(i, j);
                }
                d_gate.at(i, k) = dot;
            }
            add_into(d_h, expert_mlps_[k].backward(cache.expert_cache[k], d_expert, grads));
        }

        Tensor<T> d_logits = softmax_rows_backward(cache.gate, d_gate);
        grads.accumulate(*gate_w_, matmul_tn(cache.input, d_logits));
        grads.accumulate(*gate_b_, colsum(d_logits));
        add_into(d_h, matmul_nt(d_logits, gate_w_->value));
        return d_h;
    }

    std::size_t expert_count() const { return experts_; }

private:
    std::size_t experts_ = 0;
    bool residual_ = true;
    Parameter<T>* gate_w_ = nullptr;
    Parameter<T>* gate_b_ = nullptr;
    std::vector<RowMlp<T>> expert_mlps_;
};

// ---------------------------------------------------------------------------
// Full block

template <typename T>
class M3Layer {
public:
    M3Layer() = default;

    M3Layer(ParamStore<T>& store, const std::string& prefix, std::size_t nodes,
            std::size_t groups, std::size_t dim, std::size_t experts, Variant variant,
            bool moe_residual, bool softmax_grouping)
        : variant_(variant),
          spatial_(store, prefix + ".spatial", nodes, groups, dim, softmax_grouping,
                   variant == Variant::NoGrouping),
          moe_(store, prefix + ".moe", dim, variant == Variant::NoMoe ? 1 : experts,
               moe_residual) {}

    struct Cache {
        typename SpatialMlp<T>::Cache spatial;
        typename ChannelMoe<T>::Cache moe;
    };

    Tensor<T> forward(const Tensor<T>& h, Cache& cache) const {
        if (variant_ == Variant::NoSpatial) return moe_.forward(h, cache.moe);
        return moe_.forward(spatial_.forward(h, cache.spatial), cache.moe);
    }

    Tensor<T> backward(const Cache& cache, const Tensor<T>& d_out, GradBuffer<T>& grads) const {
        Tensor<T> d_mid = moe_.backward(cache.moe, d_out, grads);
        if (variant_ == Variant::NoSpatial) return d_mid;
        return spatial_.backward(cache.spatial, d_mid, grads);
    }

    Variant variant() const { return variant_; }
    const SpatialMlp<T>& spatial() const { return spatial_; }
    const ChannelMoe<T>& moe() const { return moe_; }

private:
    Variant variant_ = Variant::Full;
    SpatialMlp<T> spatial_;
    ChannelMoe<T> moe_;
};

}  // namespace m3net
