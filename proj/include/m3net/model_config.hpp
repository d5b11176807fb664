#pragma once

#include <cstdint>
#include <string>

#include "m3net/m3_layer.hpp"

namespace m3net {

// Full architecture record. Serialized as flat key=value text; the same text
// is embedded in checkpoints so a saved model is self-describing.
struct ModelConfig {
    std::size_t nodes = 0;      // N, set from the dataset
    int history_len = 12;       // L
    int horizon = 12;           // F
    int channels = 1;           // C
    int feature_dim = 32;
    int node_dim = 32;
    int tod_dim = 32;
    int dow_dim = 32;
    int tod_period = 288;
    int dow_period = 7;
    int groups = 10;            // g
    int experts = 4;            // K
    int num_layers = 3;
    Variant variant = Variant::Full;
    bool moe_residual = true;
    bool grouping_softmax = false;
    std::uint64_t seed = 1;

    int hidden_width() const { return feature_dim + node_dim + tod_dim + dow_dim; }

    // Throws ConfigError on inconsistent settings.
    void validate() const;

    std::string to_text() const;
    static ModelConfig from_text(const std::string& text);
};

}  // namespace m3net
