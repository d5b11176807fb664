#include "m3net/model_config.hpp"

#include "m3net/errors.hpp"
#include "m3net/kvtext.hpp"

namespace m3net {

void ModelConfig::validate() const {
    if (nodes == 0) throw ConfigError("model: nodes must be positive");
    if (history_len < 1 || horizon < 1) throw ConfigError("model: window lengths must be >= 1");
    if (channels < 1) throw ConfigError("model: channels must be >= 1");
    if (feature_dim < 1 || node_dim < 1 || tod_dim < 1 || dow_dim < 1)
        throw ConfigError("model: embedding widths must be >= 1");
    if (tod_period < 1 || dow_period < 1) throw ConfigError("model: table periods must be >= 1");
    if (groups < 1) throw ConfigError("model: groups must be >= 1");
    if (experts < 1) throw ConfigError("model: experts must be >= 1");
    if (num_layers < 0) throw ConfigError("model: num_layers must be >= 0");
}

std::string ModelConfig::to_text() const {
    KvText kv;
    kv.set("nodes", std::to_string(nodes));
    kv.set("history_len", std::to_string(history_len));
    kv.set("horizon", std::to_string(horizon));
    kv.set("channels", std::to_string(channels));
    kv.set("feature_dim", std::to_string(feature_dim));
    kv.set("node_dim", std::to_string(node_dim));
    kv.set("tod_dim", std::to_string(tod_dim));
    kv.set("dow_dim", std::to_string(dow_dim));
    kv.set("tod_period", std::to_string(tod_period));
    kv.set("dow_period", std::to_string(dow_period));
    kv.set("groups", std::to_string(groups));
    kv.set("experts", std::to_string(experts));
    kv.set("num_layers", std::to_string(num_layers));
    kv.set("variant", variant_name(variant));
    kv.set("moe_residual", moe_residual ? "true" : "false");
    kv.set("grouping_softmax", grouping_softmax ? "true" : "false");
    kv.set("seed", std::to_string(seed));
    return kv.to_text();
}

ModelConfig ModelConfig::from_text(const std::string& text) {
    KvText kv = KvText::parse(text);
    ModelConfig cfg;
    cfg.nodes = static_cast<std::size_t>(kv.get_int("nodes"));
    cfg.history_len = static_cast<int>(kv.get_int_or("history_len", cfg.history_len));
    cfg.horizon = static_cast<int>(kv.get_int_or("horizon", cfg.horizon));
    cfg.channels = static_cast<int>(kv.get_int_or("channels", cfg.channels));
    cfg.feature_dim = static_cast<int>(kv.get_int_or("feature_dim", cfg.feature_dim));
    cfg.node_dim = static_cast<int>(kv.get_int_or("node_dim", cfg.node_dim));
    cfg.tod_dim = static_cast<int>(kv.get_int_or("tod_dim", cfg.tod_dim));
    cfg.dow_dim = static_cast<int>(kv.get_int_or("dow_dim", cfg.dow_dim));
    cfg.tod_period = static_cast<int>(kv.get_int_or("tod_period", cfg.tod_period));
    cfg.dow_period = static_cast<int>(kv.get_int_or("dow_period", cfg.dow_period));
    cfg.groups = static_cast<int>(kv.get_int_or("groups", cfg.groups));
    cfg.experts = static_cast<int>(kv.get_int_or("experts", cfg.experts));
    cfg.num_layers = static_cast<int>(kv.get_int_or("num_layers", cfg.num_layers));
    cfg.variant = parse_variant(kv.get_or("variant", "full"));
    cfg.moe_residual = kv.get_bool_or("moe_residual", cfg.moe_residual);
    cfg.grouping_softmax = kv.get_bool_or("grouping_softmax", cfg.grouping_softmax);
    cfg.seed = kv.get_u64_or("seed", cfg.seed);
    cfg.validate();
    return cfg;
}

}  // namespace m3net
