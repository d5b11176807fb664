#pragma once

// The forecasting model: embedding, a stack of mixing layers, and a per-node
// regression head, plus self-describing checkpoint IO.

#include <fstream>
#include <string>
#include <vector>

#include "m3net/data.hpp"
#include "m3net/embedding.hpp"
#include "m3net/m3_layer.hpp"
#include "m3net/model_config.hpp"
#include "m3net/param.hpp"

namespace m3net {

inline constexpr char kCheckpointMagic[] = "M3NETCKPT1";  // 10 bytes on disk
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
class M3Net {
public:
    explicit M3Net(ModelConfig cfg) : cfg_(normalize(std::move(cfg))), store_(cfg_.seed) {
        EmbeddingDims dims;
        dims.history_len = cfg_.history_len;
        dims.channels = cfg_.channels;
        dims.feature_dim = cfg_.feature_dim;
        dims.node_dim = cfg_.node_dim;
        dims.tod_dim = cfg_.tod_dim;
        dims.dow_dim = cfg_.dow_dim;
        dims.tod_period = cfg_.tod_period;
        dims.dow_period = cfg_.dow_period;
        embedding_ = EmbeddingLayer<T>(store_, dims, cfg_.nodes);

        const std::size_t width = static_cast<std::size_t>(cfg_.hidden_width());
        layers_.reserve(cfg_.num_layers);
        for (int i = 0; i < cfg_.num_layers; ++i)
            layers_.emplace_back(store_, "layer" + std::to_string(i), cfg_.nodes,
                                 static_cast<std::size_t>(cfg_.groups), width,
                                 static_cast<std::size_t>(cfg_.experts), cfg_.variant,
                                 cfg_.moe_residual, cfg_.grouping_softmax);

        out_w_ = &store_.create("regression.weight",
                                {width, static_cast<std::size_t>(cfg_.horizon)}, width);
        out_b_ = &store_.create("regression.bias",
                                {1, static_cast<std::size_t>(cfg_.horizon)}, width);
    }

    struct Cache {
        typename EmbeddingLayer<T>::Cache embed;
        std::vector<typename M3Layer<T>::Cache> layers;
        Tensor<T> final_repr;
    };

    // Returns nodes x horizon predictions in normalized scale.
    Tensor<T> forward(const Tensor<T>& x, int tod_idx, int dow_idx, Cache& cache) const {
        cache.layers.resize(layers_.size());
        Tensor<T> h = embedding_.forward(x, tod_idx, dow_idx, cache.embed);
        for (std::size_t i = 0; i < layers_.size(); ++i)
            h = layers_[i].forward(h, cache.layers[i]);
        cache.final_repr = std::move(h);
        return add_bias_rows(matmul(cache.final_repr, out_w_->value), out_b_->value);
    }

    void backward(const Cache& cache, const Tensor<T>& d_pred, GradBuffer<T>& grads) const {
        grads.accumulate(*out_w_, matmul_tn(cache.final_repr, d_pred));
        grads.accumulate(*out_b_, colsum(d_pred));
        Tensor<T> d_h = matmul_nt(d_pred, out_w_->value);
        for (std::size_t i = layers_.size(); i-- > 0;)
            d_h = layers_[i].backward(cache.layers[i], d_h, grads);
        embedding_.backward(cache.embed, d_h, grads);
    }

    // Raw-scale predictions.
    Tensor<T> predict(const Tensor<T>& x, int tod_idx, int dow_idx,
                      const NormStats& stats) const {
        Cache cache;
        Tensor<T> out = forward(x, tod_idx, dow_idx, cache);
        for (T& v : out.data)
            v = static_cast<T>(denormalize_flow(static_cast<double>(v), stats));
        return out;
    }

    const ModelConfig& config() const { return cfg_; }
    ParamStore<T>& store() { return store_; }
    const ParamStore<T>& store() const { return store_; }
    const std::vector<M3Layer<T>>& layers() const { return layers_; }

private:
    // A single-expert mixture is the mixture-free block; record it that way.
    static ModelConfig normalize(ModelConfig cfg) {
        cfg.validate();
        if (cfg.variant == Variant::NoMoe) cfg.experts = 1;
        return cfg;
    }

    ModelConfig cfg_;
    ParamStore<T> store_;
    EmbeddingLayer<T> embedding_;
    std::vector<M3Layer<T>> layers_;
    Parameter<T>* out_w_ = nullptr;
    Parameter<T>* out_b_ = nullptr;
};

// ---------------------------------------------------------------------------
// Checkpoints: magic, version, embedded config text, then each parameter in
// store order as (name, rank, dims, float32 data), all little-endian.

template <typename T>
void save_checkpoint(const M3Net<T>& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint: " + path);
    write_bytes(out, kCheckpointMagic, 10);
    write_u32(out, kCheckpointVersion);
    const std::string cfg_text = model.config().to_text();
    write_u32(out, static_cast<std::uint32_t>(cfg_text.size()));
    write_bytes(out, cfg_text.data(), cfg_text.size());
    const ParamStore<T>& store = model.store();
    write_u32(out, static_cast<std::uint32_t>(store.size()));
    for (std::size_t i = 0; i < store.size(); ++i) {
        const Parameter<T>& p = store[i];
        write_u32(out, static_cast<std::uint32_t>(p.name.size()));
        write_bytes(out, p.name.data(), p.name.size());
        write_u8(out, static_cast<std::uint8_t>(p.value.rank()));
        for (std::size_t d : p.value.shape) write_u32(out, static_cast<std::uint32_t>(d));
        for (T v : p.value.data) write_f32(out, static_cast<float>(v));
    }
    if (!out) throw IoError("write failed: " + path);
}

template <typename T>
M3Net<T> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("checkpoint not found: " + path);
    char magic[10];
    read_bytes(in, magic, 10, "checkpoint magic");
    if (std::string(magic, 10) != std::string(kCheckpointMagic, 10))
        throw CorruptError("not a checkpoint (bad magic): " + path);
    const std::uint32_t version = read_u32(in, "checkpoint version");
    if (version != kCheckpointVersion)
        throw CorruptError("incompatible checkpoint version " + std::to_string(version) +
                           ", expected " + std::to_string(kCheckpointVersion));
    const std::uint32_t cfg_len = read_u32(in, "config length");
    std::string cfg_text(cfg_len, '\0');
    read_bytes(in, cfg_text.data(), cfg_len, "config text");

    M3Net<T> model(ModelConfig::from_text(cfg_text));
    ParamStore<T>& store = model.store();
    const std::uint32_t count = read_u32(in, "parameter count");
    if (count != store.size())
        throw CorruptError("checkpoint lists " + std::to_string(count) + " parameters, config implies " +
                           std::to_string(store.size()));
    for (std::size_t i = 0; i < store.size(); ++i) {
        Parameter<T>& p = store[i];
        const std::uint32_t name_len = read_u32(in, "parameter name length");
        std::string name(name_len, '\0');
        read_bytes(in, name.data(), name_len, "parameter name");
        if (name != p.name)
            throw CorruptError("checkpoint parameter order mismatch: found " + name +
                               ", expected " + p.name);
        const std::uint8_t rank = read_u8(in, "parameter rank");
        if (rank != p.value.rank())
            throw CorruptError("parameter " + name + ": rank " + std::to_string(rank) +
                               ", expected " + std::to_string(p.value.rank()));
        for (std::size_t d = 0; d < p.value.rank(); ++d) {
            const std::uint32_t dim = read_u32(in, "parameter dims");
            if (dim != p.value.shape[d])
                throw CorruptError("parameter " + name + ": dimension mismatch");
        }
        for (std::size_t j = 0; j < p.value.numel(); ++j)
            p.value.data[j] = static_cast<T>(read_f32(in, "parameter data"));
    }
    return model;
}

}  // namespace m3net
