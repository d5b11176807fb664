#pragma once

// Named parameters with gradient and Adam moment state, kept in insertion
// order so checkpoints and optimizer sweeps are reproducible.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "m3net/errors.hpp"
#include "m3net/rng.hpp"
#include "m3net/tensor.hpp"

namespace m3net {

template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
    Tensor<T> adam_m;
    Tensor<T> adam_v;
    std::int64_t step_count = 0;

    std::size_t index = 0;   // position in the owning store
    std::size_t offset = 0;  // element offset in a flat view of the store

    std::size_t numel() const { return value.numel(); }
};

template <typename T>
class ParamStore {
public:
    explicit ParamStore(std::uint64_t seed = 0) : seed_(seed) {}

    ParamStore(const ParamStore&) = delete;
    ParamStore& operator=(const ParamStore&) = delete;
    ParamStore(ParamStore&&) = default;
    ParamStore& operator=(ParamStore&&) = default;

    std::uint64_t seed() const { return seed_; }

    // Creates a parameter initialized uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)]
    // from a stream keyed by (seed, name). Init is independent of creation order.
    Parameter<T>& create(const std::string& name, std::vector<std::size_t> shape,
                         std::size_t fan_in) {
        Parameter<T>& p = emplace(name, std::move(shape));
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        SplitMix64 rng = keyed_stream(seed_, name);
        for (T& v : p.value.data) v = static_cast<T>(rng.next_real(-bound, bound));
        return p;
    }

    Parameter<T>& create_zeros(const std::string& name, std::vector<std::size_t> shape) {
        return emplace(name, std::move(shape));
    }

    Parameter<T>* find(const std::string& name) {
        auto it = index_.find(name);
        return it == index_.end() ? nullptr : params_[it->second].get();
    }
    const Parameter<T>* find(const std::string& name) const {
        auto it = index_.find(name);
        return it == index_.end() ? nullptr : params_[it->second].get();
    }

    std::size_t size() const { return params_.size(); }
    std::size_t total_elements() const { return total_; }

    Parameter<T>& operator[](std::size_t i) { return *params_[i]; }
    const Parameter<T>& operator[](std::size_t i) const { return *params_[i]; }

    void zero_grads() {
        for (auto& p : params_)
            for (T& g : p->grad.data) g = T(0);
    }

    // Flat copies of all parameter values, in store order.
    std::vector<T> snapshot() const {
        std::vector<T> flat(total_);
        for (const auto& p : params_)
            std::copy(p->value.data.begin(), p->value.data.end(), flat.begin() + p->offset);
        return flat;
    }

    void restore(const std::vector<T>& flat) {
        if (flat.size() != total_)
            throw ShapeError("restore: snapshot has " + std::to_string(flat.size()) +
                             " elements, store has " + std::to_string(total_));
        for (auto& p : params_)
            std::copy(flat.begin() + p->offset, flat.begin() + p->offset + p->numel(),
                      p->value.data.begin());
    }

private:
    Parameter<T>& emplace(const std::string& name, std::vector<std::size_t> shape) {
        if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
        auto p = std::make_unique<Parameter<T>>();
        p->name = name;
        p->value = Tensor<T>(shape);
        p->grad = Tensor<T>(shape);
        p->adam_m = Tensor<T>(shape);
        p->adam_v = Tensor<T>(shape);
        p->index = params_.size();
        p->offset = total_;
        total_ += p->numel();
        index_.emplace(name, params_.size());
        params_.push_back(std::move(p));
        return *params_.back();
    }

    std::vector<std::unique_ptr<Parameter<T>>> params_;
    std::unordered_map<std::string, std::size_t> index_;
    std::uint64_t seed_ = 0;
    std::size_t total_ = 0;
};

// Scratch gradient accumulator over a whole store. Backward passes write here;
// buffers are summed into Parameter::grad in a fixed order, which keeps batch
// parallelism bit-deterministic.
template <typename T>
class GradBuffer {
public:
    explicit GradBuffer(const ParamStore<T>& store)
        : store_(&store), data_(store.total_elements(), T(0)) {}

    std::span<T> of(const Parameter<T>& p) { return {data_.data() + p.offset, p.numel()}; }

    void accumulate(const Parameter<T>& p, const Tensor<T>& g) {
        if (!g.same_shape(p.value))
            throw ShapeError("grad accumulate: " + g.shape_str() + " into " +
                             p.value.shape_str() + " (" + p.name + ")");
        T* dst = data_.data() + p.offset;
        for (std::size_t i = 0; i < g.numel(); ++i) dst[i] += g.data[i];
    }

    void clear() { std::fill(data_.begin(), data_.end(), T(0)); }

    // Sums this buffer into the store's parameter gradients.
    void flush_to(ParamStore<T>& store) const {
        for (std::size_t pi = 0; pi < store.size(); ++pi) {
            Parameter<T>& p = store[pi];
            const T* src = data_.data() + p.offset;
            for (std::size_t i = 0; i < p.numel(); ++i) p.grad.data[i] += src[i];
        }
    }

    const std::vector<T>& flat() const { return data_; }

private:
    const ParamStore<T>* store_;
    std::vector<T> data_;
};

}  // namespace m3net
