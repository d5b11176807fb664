#include "m3net/run_config.hpp"

#include <fstream>
#include <sstream>

#include "m3net/errors.hpp"

namespace m3net {

namespace {

bool starts_with(const std::string& s, const std::string& prefix) {
    return s.size() >= prefix.size() && s.compare(0, prefix.size(), prefix) == 0;
}

std::string trim_num(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

}  // namespace

RunConfig RunConfig::from_text(const std::string& text) {
    RunConfig rc;
    KvText kv = KvText::parse(text);
    for (const std::string& key : kv.keys()) rc.apply_override(key, kv.get(key));
    return rc;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("config not found: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_text(buf.str());
}

void RunConfig::apply_override(const std::string& key, const std::string& value) {
    if (starts_with(key, "model.")) {
        model_kv.set(key.substr(6), value);
        return;
    }
    KvText one;
    one.set(key, value);
    if (key == "train.lr0") train.lr0 = one.get_real(key);
    else if (key == "train.batch_size") train.batch_size = static_cast<int>(one.get_int(key));
    else if (key == "train.max_epochs") train.max_epochs = static_cast<int>(one.get_int(key));
    else if (key == "train.decay_step") train.decay_step = static_cast<int>(one.get_int(key));
    else if (key == "train.decay_gamma") train.decay_gamma = one.get_real(key);
    else if (key == "train.patience") train.patience = static_cast<int>(one.get_int(key));
    else if (key == "train.seed") train.seed = one.get_u64(key);
    else if (key == "train.mape_mask_threshold") train.mape_mask_threshold = one.get_real(key);
    else if (key == "train.clip_norm") train.clip_norm = one.get_real(key);
    else if (key == "train.threads") train.threads = static_cast<int>(one.get_int(key));
    else if (key == "train.mask_zero_targets") train.mask_zero_targets = one.get_bool(key);
    else if (key == "split.train_frac") split.train_frac = one.get_real(key);
    else if (key == "split.val_frac") split.val_frac = one.get_real(key);
    else if (key == "split.test_frac") split.test_frac = one.get_real(key);
    else if (key == "dataset") dataset_path = value;
    else if (key == "card") card_path = value;
    else if (key == "out_dir") out_dir = value;
    else throw ConfigError("unknown config key: " + key);
}

ModelConfig RunConfig::make_model_config(std::size_t nodes, int tod_period) const {
    KvText kv = model_kv;
    if (!kv.has("nodes")) kv.set("nodes", std::to_string(nodes));
    if (!kv.has("tod_period")) kv.set("tod_period", std::to_string(tod_period));
    ModelConfig cfg = ModelConfig::from_text(kv.to_text());
    if (cfg.nodes != nodes)
        throw ConfigError("config pins nodes = " + std::to_string(cfg.nodes) +
                          " but the dataset has " + std::to_string(nodes));
    return cfg;
}

std::string RunConfig::to_text(const ModelConfig* resolved_model) const {
    KvText kv;
    if (resolved_model) {
        KvText model = KvText::parse(resolved_model->to_text());
        for (const std::string& k : model.keys()) kv.set("model." + k, model.get(k));
    } else {
        for (const std::string& k : model_kv.keys()) kv.set("model." + k, model_kv.get(k));
    }
    kv.set("train.lr0", trim_num(train.lr0));
    kv.set("train.batch_size", std::to_string(train.batch_size));
    kv.set("train.max_epochs", std::to_string(train.max_epochs));
    kv.set("train.decay_step", std::to_string(train.decay_step));
    kv.set("train.decay_gamma", trim_num(train.decay_gamma));
    kv.set("train.patience", std::to_string(train.patience));
    kv.set("train.seed", std::to_string(train.seed));
    kv.set("train.mape_mask_threshold", trim_num(train.mape_mask_threshold));
    kv.set("train.clip_norm", trim_num(train.clip_norm));
    kv.set("train.threads", std::to_string(train.threads));
    kv.set("train.mask_zero_targets", train.mask_zero_targets ? "true" : "false");
    kv.set("split.train_frac", trim_num(split.train_frac));
    kv.set("split.val_frac", trim_num(split.val_frac));
    kv.set("split.test_frac", trim_num(split.test_frac));
    kv.set("dataset", dataset_path);
    kv.set("card", card_path);
    kv.set("out_dir", out_dir);
    return kv.to_text();
}

}  // namespace m3net
