#pragma once

// One merged configuration per run: architecture settings (node count may be
// left to the dataset), optimizer settings, split fractions, and paths. Loads
// from flat key=value text with command-line overrides layered on top, and is
// written back into the output directory before a run starts.

#include <cstddef>
#include <string>

#include "m3net/data.hpp"
#include "m3net/kvtext.hpp"
#include "m3net/model_config.hpp"
#include "m3net/trainer.hpp"

namespace m3net {

struct RunConfig {
    KvText model_kv;  // model.* settings; nodes/channels resolved at load time
    TrainConfig train;
    SplitSpec split;
    std::string dataset_path;
    std::string card_path;
    std::string out_dir = "out";

    static RunConfig from_text(const std::string& text);
    static RunConfig load(const std::string& path);

    // Applies one "key=value" override using the same keys as the file.
    void apply_override(const std::string& key, const std::string& value);

    // Materializes the architecture for a concrete dataset.
    ModelConfig make_model_config(std::size_t nodes, int tod_period) const;

    std::string to_text(const ModelConfig* resolved_model) const;
};

}  // namespace m3net
