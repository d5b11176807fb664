// Command-line front end: prepare data, train, evaluate, run the ablation
// matrix, export grouping matrices, and run the self-check suite.
//
// Exit codes: 0 ok, 1 verification failure, 2 input error, 3 corrupt artifact.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "m3net/data.hpp"
#include "m3net/dataset_card.hpp"
#include "m3net/errors.hpp"
#include "m3net/export_grouping.hpp"
#include "m3net/metrics.hpp"
#include "m3net/model.hpp"
#include "m3net/npy.hpp"
#include "m3net/run_config.hpp"
#include "m3net/sysinfo.hpp"
#include "m3net/trainer.hpp"
#include "m3net/verify.hpp"

namespace fs = std::filesystem;
using namespace m3net;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerifyFailure = 1;
constexpr int kExitInputError = 2;
constexpr int kExitCorrupt = 3;

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
}

struct CommonFlags {
    std::string config_path;
    std::string dataset;
    std::string card;
    std::string out_dir;
    std::string variant;
    std::vector<std::string> sets;
    std::uint64_t seed = 0;
    bool seed_given = false;
    int epochs = 0;
    int device_threads = -1;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "run config file (key=value lines)");
    cmd->add_option("--dataset", flags.dataset, "raw series container");
    cmd->add_option("--card", flags.card, "dataset card file");
    cmd->add_option("--out", flags.out_dir, "output directory");
    cmd->add_option("--seed", flags.seed, "seed for init and shuffling")
        ->each([&flags](const std::string&) { flags.seed_given = true; });
    cmd->add_option("--variant", flags.variant, "full, no_moe, no_spatial or no_grouping");
    cmd->add_option("--epochs", flags.epochs, "cap on training epochs");
    cmd->add_option("--device-threads", flags.device_threads, "worker threads (0 = auto)");
    cmd->add_option("--set", flags.sets, "extra key=value overrides")->take_all();
}

RunConfig resolve_run_config(const CommonFlags& flags) {
    RunConfig rc;
    if (!flags.config_path.empty()) rc = RunConfig::load(flags.config_path);
    for (const std::string& kv : flags.sets) {
        const std::size_t eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got " + kv);
        rc.apply_override(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!flags.dataset.empty()) rc.dataset_path = flags.dataset;
    if (!flags.card.empty()) rc.card_path = flags.card;
    if (!flags.out_dir.empty()) rc.out_dir = flags.out_dir;
    if (!flags.variant.empty()) rc.model_kv.set("variant", flags.variant);
    if (flags.seed_given) {
        rc.model_kv.set("seed", std::to_string(flags.seed));
        rc.train.seed = flags.seed;
    }
    if (flags.epochs > 0) rc.train.max_epochs = flags.epochs;
    if (flags.device_threads >= 0) rc.train.threads = flags.device_threads;
    if (rc.dataset_path.empty()) throw IoError("no dataset given (--dataset or config)");
    return rc;
}

struct LoadedData {
    RawSeries<float> series;
    WindowSplits<float> splits;
    ModelConfig model_cfg;
};

LoadedData load_and_window(const RunConfig& rc) {
    LoadedData data;
    if (!rc.card_path.empty()) {
        DatasetCard card = DatasetCard::load(rc.card_path);
        data.series = load_raw<float>(rc.dataset_path, &card);
    } else {
        data.series = load_raw<float>(rc.dataset_path);
    }
    rc.split.validate();
    data.model_cfg =
        rc.make_model_config(data.series.nodes(), data.series.intervals_per_day());
    if (static_cast<std::size_t>(data.model_cfg.channels) > data.series.channels())
        throw ConfigError("model wants " + std::to_string(data.model_cfg.channels) +
                          " channels, container has " + std::to_string(data.series.channels()));
    const std::size_t n_train = train_frame_count(data.series.frames(), rc.split);
    NormStats stats = compute_stats(data.series, n_train);
    data.splits = make_windows(data.series, data.model_cfg.history_len, data.model_cfg.horizon,
                               data.model_cfg.channels, stats, rc.split);
    return data;
}

std::string history_lines(const std::vector<EpochRecord>& history) {
    std::string out;
    for (const EpochRecord& r : history) {
        out += "epoch=" + std::to_string(r.epoch);
        out += " lr=" + fmt(r.lr);
        out += " train_loss=" + fmt(r.train_loss);
        out += " val_mae=" + fmt(r.val_mae);
        out += " val_rmse=" + fmt(r.val_rmse);
        out += " val_mape=" + fmt(r.val_mape);
        out += '\n';
    }
    return out;
}

std::string cost_lines(const std::vector<EpochRecord>& history) {
    std::string out;
    for (const EpochRecord& r : history) {
        out += "epoch=" + std::to_string(r.epoch);
        out += " epoch_seconds=" + fmt(r.epoch_seconds);
        out += " peak_bytes=" + std::to_string(r.peak_bytes);
        out += '\n';
    }
    return out;
}

// Trains one model on already-windowed data; writes nothing.
TrainResult train_model(M3Net<float>& model, const LoadedData& data, const TrainConfig& tcfg,
                        bool chatty) {
    TrainHooks hooks;
    if (chatty) {
        hooks.on_epoch = [](const EpochRecord& r) {
            std::printf("epoch %3d  lr %-9.5g  train %-9.4f  val mae %-9.4f  %.1fs  rss %lld MB\n",
                        r.epoch, r.lr, r.train_loss, r.val_mae, r.epoch_seconds,
                        static_cast<long long>(r.peak_bytes / (1024 * 1024)));
            std::fflush(stdout);
        };
    }
    return train(model, data.splits.train, data.splits.val, data.splits.stats, tcfg, hooks);
}

int cmd_train(const CommonFlags& flags) {
    RunConfig rc = resolve_run_config(flags);
    LoadedData data = load_and_window(rc);

    fs::create_directories(rc.out_dir);
    // The resolved config goes to disk before any training starts.
    write_file(fs::path(rc.out_dir) / "run_config.txt", rc.to_text(&data.model_cfg));

    M3Net<float> model(data.model_cfg);
    std::printf("training %s on %s: %zu nodes, %zu/%zu/%zu windows, %zu parameters\n",
                variant_name(data.model_cfg.variant), rc.dataset_path.c_str(),
                data.series.nodes(), data.splits.train.size(), data.splits.val.size(),
                data.splits.test.size(), model.store().total_elements());
    TrainResult result = train_model(model, data, rc.train, true);

    save_checkpoint(model, (fs::path(rc.out_dir) / "model.ckpt").string());
    write_file(fs::path(rc.out_dir) / "history.log", history_lines(result.history));
    write_file(fs::path(rc.out_dir) / "cost.log", cost_lines(result.history));

    const WindowSet<float>& eval_set =
        data.splits.test.empty() ? data.splits.val : data.splits.test;
    MetricsReport report = evaluate(model, eval_set, data.splits.stats,
                                    rc.train.mape_mask_threshold,
                                    resolve_threads(rc.train.threads));
    const std::string text = format_metrics_report(report);
    write_file(fs::path(rc.out_dir) / "report.txt", text);
    std::printf("best epoch %d (val mae %.4f)\ntest metrics:\n%s", result.best_epoch,
                result.best_val_mae, text.c_str());
    return kExitOk;
}

int cmd_evaluate(const std::string& checkpoint, const CommonFlags& flags,
                 const std::string& split_name) {
    RunConfig rc = resolve_run_config(flags);
    M3Net<float> model = load_checkpoint<float>(checkpoint);

    // Window with the checkpoint's own architecture settings.
    RunConfig pinned = rc;
    KvText model_kv = KvText::parse(model.config().to_text());
    for (const std::string& k : model_kv.keys()) pinned.model_kv.set(k, model_kv.get(k));
    LoadedData data = load_and_window(pinned);

    const WindowSet<float>* chosen = &data.splits.test;
    if (split_name == "train") chosen = &data.splits.train;
    else if (split_name == "val") chosen = &data.splits.val;
    else if (split_name != "test") throw ConfigError("unknown split: " + split_name);

    MetricsReport report = evaluate(model, *chosen, data.splits.stats,
                                    rc.train.mape_mask_threshold,
                                    resolve_threads(rc.train.threads));
    const std::string text = format_metrics_report(report);
    std::printf("%s split of %s:\n%s", split_name.c_str(), rc.dataset_path.c_str(),
                text.c_str());
    if (!flags.out_dir.empty()) {
        fs::create_directories(flags.out_dir);
        write_file(fs::path(flags.out_dir) / ("report_" + split_name + ".txt"), text);
    }
    return kExitOk;
}

int cmd_ablate(const CommonFlags& flags) {
    RunConfig rc = resolve_run_config(flags);
    LoadedData base = load_and_window(rc);
    fs::create_directories(rc.out_dir);
    write_file(fs::path(rc.out_dir) / "run_config.txt", rc.to_text(&base.model_cfg));

    const Variant variants[4] = {Variant::Full, Variant::NoMoe, Variant::NoSpatial,
                                 Variant::NoGrouping};
    std::string table =
        "variant       mae_avg     rmse_avg    mape_avg\n";
    for (Variant v : variants) {
        ModelConfig cfg = base.model_cfg;
        cfg.variant = v;
        M3Net<float> model(cfg);
        std::printf("ablation %s: %zu parameters\n", variant_name(v),
                    model.store().total_elements());
        TrainResult result = train_model(model, base, rc.train, true);

        const WindowSet<float>& eval_set =
            base.splits.test.empty() ? base.splits.val : base.splits.test;
        MetricsReport report = evaluate(model, eval_set, base.splits.stats,
                                        rc.train.mape_mask_threshold,
                                        resolve_threads(rc.train.threads));
        char row[160];
        std::snprintf(row, sizeof(row), "%-12s %11.4f %11.4f %11.4f\n", variant_name(v),
                      report.avg.mae, report.avg.rmse, report.avg.mape);
        table += row;

        save_checkpoint(model, (fs::path(rc.out_dir) /
                                (std::string("model_") + variant_name(v) + ".ckpt"))
                                   .string());
        write_file(fs::path(rc.out_dir) / (std::string("history_") + variant_name(v) + ".log"),
                   history_lines(result.history));
    }
    write_file(fs::path(rc.out_dir) / "ablation.txt", table);
    std::printf("%s", table.c_str());
    return kExitOk;
}

int cmd_export_grouping(const std::string& checkpoint, const std::string& out_dir) {
    M3Net<float> model = load_checkpoint<float>(checkpoint);
    fs::create_directories(out_dir);
    int exported = 0;
    for (int l = 0; l < model.config().num_layers; ++l) {
        const std::string name = "layer" + std::to_string(l) + ".spatial.grouping";
        const Parameter<float>* p = model.store().find(name);
        if (!p) continue;
        const std::string base = (fs::path(out_dir) / ("grouping_layer" + std::to_string(l))).string();
        write_matrix_csv(base + ".csv", p->value);
        write_heatmap_svg(base + ".svg", p->value, "grouping, layer " + std::to_string(l));
        ++exported;
    }
    std::printf("exported %d grouping matrices to %s\n", exported, out_dir.c_str());
    return kExitOk;
}

int cmd_verify(bool inject_fault) {
    VerifyOptions options;
    options.inject_backward_fault = inject_fault;
    VerifyReport report = run_verification(options);
    for (const VerifyGroup& g : report.groups)
        std::printf("%s %-16s %s\n", g.pass ? "PASS" : "FAIL", g.name.c_str(),
                    g.detail.c_str());
    if (!report.all_pass) {
        for (const VerifyGroup& g : report.groups)
            if (!g.pass) std::fprintf(stderr, "verification failed: %s\n", g.name.c_str());
        return kExitVerifyFailure;
    }
    return kExitOk;
}

int cmd_convert_raw(const std::string& input, const std::string& card_path,
                    const std::string& out_path, const std::string& key, int channel_cap) {
    DatasetCard card = DatasetCard::load(card_path);

    NpyArray arr;
    const std::string ext = fs::path(input).extension().string();
    if (ext == ".npz") arr = load_npz_entry(input, key);
    else if (ext == ".npy") arr = load_npy(input);
    else throw IoError("convert-raw reads .npy or .npz, got " + input);

    if (arr.shape.size() == 2) arr.shape.push_back(1);
    if (arr.shape.size() != 3)
        throw IoError("expected a (frames, nodes, channels) array, got rank " +
                      std::to_string(arr.shape.size()));

    RawSeries<float> series;
    series.name = card.name;
    series.interval_minutes = card.interval_minutes;
    series.start_weekday = card.start_weekday;
    const std::size_t frames = arr.shape[0], nodes = arr.shape[1];
    std::size_t channels = arr.shape[2];
    if (channel_cap > 0 && static_cast<std::size_t>(channel_cap) < channels)
        channels = static_cast<std::size_t>(channel_cap);
    series.data = Tensor<float>({frames, nodes, channels});
    const std::size_t src_channels = arr.shape[2];
    for (std::size_t t = 0; t < frames; ++t)
        for (std::size_t n = 0; n < nodes; ++n)
            for (std::size_t c = 0; c < channels; ++c)
                series.data.at(t, n, c) =
                    static_cast<float>(arr.data[(t * nodes + n) * src_channels + c]);

    save_raw(out_path, series);
    // Read back through the validating loader so a bad conversion fails here.
    load_raw<float>(out_path, &card);
    std::printf("wrote %s: %zu frames x %zu nodes x %zu channels\n", out_path.c_str(), frames,
                nodes, channels);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"M3-Net traffic forecasting"};
    app.require_subcommand(1);

    CommonFlags train_flags, eval_flags, ablate_flags;
    std::string eval_checkpoint, eval_split = "test";
    std::string export_checkpoint, export_out = "out";
    std::string convert_input, convert_card, convert_out, convert_key;
    int convert_channels = 0;
    bool verify_fault = false;

    CLI::App* train_cmd = app.add_subcommand("train", "train a model and report test metrics");
    add_common(train_cmd, train_flags);

    CLI::App* eval_cmd = app.add_subcommand("evaluate", "evaluate a checkpoint on a split");
    eval_cmd->add_option("--checkpoint", eval_checkpoint, "model checkpoint")->required();
    eval_cmd->add_option("--split", eval_split, "train, val or test");
    add_common(eval_cmd, eval_flags);

    CLI::App* ablate_cmd =
        app.add_subcommand("ablate", "train all four variants on the same data and seed");
    add_common(ablate_cmd, ablate_flags);

    CLI::App* export_cmd =
        app.add_subcommand("export-grouping", "write per-layer grouping matrices as CSV + SVG");
    export_cmd->add_option("--checkpoint", export_checkpoint, "model checkpoint")->required();
    export_cmd->add_option("--out", export_out, "output directory");

    CLI::App* verify_cmd = app.add_subcommand("verify", "run the self-check property suite");
    verify_cmd->add_flag("--inject-backward-fault", verify_fault,
                         "corrupt one analytic gradient (test fixture)")
        ->group("");  // hidden

    CLI::App* convert_cmd =
        app.add_subcommand("convert-raw", "convert a .npy/.npz dump into a container");
    convert_cmd->add_option("--input", convert_input, "source .npy or .npz")->required();
    convert_cmd->add_option("--card", convert_card, "dataset card")->required();
    convert_cmd->add_option("--out", convert_out, "container path to write")->required();
    convert_cmd->add_option("--key", convert_key, "array name inside the npz");
    convert_cmd->add_option("--channels", convert_channels, "keep only the first N channels");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train_cmd->parsed()) return cmd_train(train_flags);
        if (eval_cmd->parsed()) return cmd_evaluate(eval_checkpoint, eval_flags, eval_split);
        if (ablate_cmd->parsed()) return cmd_ablate(ablate_flags);
        if (export_cmd->parsed()) return cmd_export_grouping(export_checkpoint, export_out);
        if (verify_cmd->parsed()) return cmd_verify(verify_fault);
        if (convert_cmd->parsed())
            return cmd_convert_raw(convert_input, convert_card, convert_out, convert_key,
                                   convert_channels);
    } catch (const CorruptError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitCorrupt;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitInputError;
    }
    return kExitInputError;
}
