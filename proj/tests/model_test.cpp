#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "m3net/model.hpp"
#include "m3net/verify.hpp"
#include "test_util.hpp"

using namespace m3net;
using m3test::bit_equal;
using m3test::fresh_dir;
using m3test::random_tensor;

namespace {

ModelConfig pems08_defaults() {
    ModelConfig cfg;
    cfg.nodes = 170;
    cfg.seed = 7;
    return cfg;
}

// Closed-form parameter count for a given config (counted once by enumerating
// the layers on paper; the store must agree).
std::size_t expected_param_count(const ModelConfig& cfg) {
    const std::size_t d = cfg.hidden_width();
    const std::size_t mlp = 2 * (d * d + d);
    std::size_t count = 0;
    count += static_cast<std::size_t>(cfg.history_len) * cfg.channels * cfg.feature_dim +
             cfg.feature_dim;                                // history projection
    count += cfg.nodes * cfg.node_dim;                        // node table
    count += static_cast<std::size_t>(cfg.tod_period) * cfg.tod_dim;
    count += static_cast<std::size_t>(cfg.dow_period) * cfg.dow_dim;
    const std::size_t experts = cfg.variant == Variant::NoMoe ? 1 : cfg.experts;
    count += static_cast<std::size_t>(cfg.num_layers) *
             (cfg.nodes * cfg.groups                          // grouping matrix
              + mlp                                           // shared spatial perceptron
              + d * experts + experts                         // gate
              + experts * mlp);                               // expert perceptrons
    count += d * cfg.horizon + cfg.horizon;                   // regression head
    return count;
}

}  // namespace

TEST_CASE("same config and seed build identical models; different seeds differ") {
    ModelConfig cfg = pems08_defaults();
    cfg.nodes = 11;
    M3Net<float> a(cfg), b(cfg);
    REQUIRE(a.store().size() == b.store().size());
    for (std::size_t i = 0; i < a.store().size(); ++i)
        CHECK(bit_equal(a.store()[i].value, b.store()[i].value));

    SplitMix64 rng(40);
    auto x = random_tensor<float>({12, 11, 1}, rng);
    M3Net<float>::Cache ca, cb;
    CHECK(bit_equal(a.forward(x, 3, 4, ca), b.forward(x, 3, 4, cb)));

    cfg.seed = 8;
    M3Net<float> c(cfg);
    CHECK_FALSE(bit_equal(a.store()[0].value, c.store()[0].value));
}

TEST_CASE("parameter count matches the frozen closed form") {
    ModelConfig cfg = pems08_defaults();
    M3Net<float> model(cfg);
    CHECK(model.store().total_elements() == expected_param_count(cfg));
    // Regression pin for the stock setup on a 170-node network.
    CHECK(model.store().total_elements() == 518852);

    ModelConfig toy = toy_model_config(ToyModelSpec{});
    M3Net<double> toy_model(toy);
    CHECK(toy_model.store().total_elements() == expected_param_count(toy));
}

TEST_CASE("stock settings on a 170-node network produce 170 x 12 predictions") {
    ModelConfig cfg = pems08_defaults();
    M3Net<float> model(cfg);
    SplitMix64 rng(45);
    auto x = random_tensor<float>({12, 170, 1}, rng);
    M3Net<float>::Cache cache;
    auto y = model.forward(x, 100, 4, cache);
    CHECK(y.shape == std::vector<std::size_t>{170, 12});
    CHECK(y.all_finite());
}

TEST_CASE("a stack of zero layers still regresses the embedding") {
    ModelConfig cfg = pems08_defaults();
    cfg.nodes = 5;
    cfg.num_layers = 0;
    M3Net<double> model(cfg);
    SplitMix64 rng(41);
    auto x = random_tensor<double>({12, 5, 1}, rng);
    M3Net<double>::Cache cache;
    auto y = model.forward(x, 0, 0, cache);
    CHECK(y.shape == std::vector<std::size_t>{5, 12});
    CHECK(y.all_finite());
}

TEST_CASE("all-zero parameters predict the bias row everywhere") {
    ModelConfig cfg = pems08_defaults();
    cfg.nodes = 4;
    cfg.num_layers = 1;
    M3Net<double> model(cfg);
    for (std::size_t i = 0; i < model.store().size(); ++i)
        for (double& v : model.store()[i].value.data) v = 0.0;
    auto& bias = model.store().find("regression.bias")->value;
    for (int f = 0; f < 12; ++f) bias.at(0, f) = 0.5 * f;

    SplitMix64 rng(42);
    auto x = random_tensor<double>({12, 4, 1}, rng);
    M3Net<double>::Cache cache;
    auto y = model.forward(x, 0, 0, cache);
    for (std::size_t n = 0; n < 4; ++n)
        for (int f = 0; f < 12; ++f) CHECK(y.at(n, f) == 0.5 * f);
}

TEST_CASE("predict denormalizes: zero output maps to the mean") {
    ModelConfig cfg = pems08_defaults();
    cfg.nodes = 3;
    cfg.num_layers = 0;
    M3Net<double> model(cfg);
    for (std::size_t i = 0; i < model.store().size(); ++i)
        for (double& v : model.store()[i].value.data) v = 0.0;

    NormStats stats;
    stats.mean = {200.0};
    stats.std = {50.0};
    SplitMix64 rng(43);
    auto x = random_tensor<double>({12, 3, 1}, rng);
    auto y = model.predict(x, 0, 0, stats);
    for (double v : y.data) CHECK(v == doctest::Approx(200.0));
}

TEST_CASE("variant no_spatial output is exactly invariant to grouping perturbations") {
    ModelConfig cfg = pems08_defaults();
    cfg.nodes = 6;
    cfg.num_layers = 2;
    cfg.variant = Variant::NoSpatial;
    M3Net<float> model(cfg);
    SplitMix64 rng(44);
    auto x = random_tensor<float>({12, 6, 1}, rng);
    M3Net<float>::Cache c1;
    auto before = model.forward(x, 1, 1, c1);

    for (int l = 0; l < 2; ++l)
        for (float& v :
             model.store().find("layer" + std::to_string(l) + ".spatial.grouping")->value.data)
            v += 42.0f;
    M3Net<float>::Cache c2;
    CHECK(bit_equal(model.forward(x, 1, 1, c2), before));
}

TEST_CASE("checkpoint round trip is bit exact and self-describing") {
    auto dir = fresh_dir("ckpt");
    ModelConfig cfg = pems08_defaults();
    cfg.nodes = 8;
    cfg.num_layers = 2;
    cfg.variant = Variant::NoMoe;
    cfg.experts = 4;  // normalized to 1 by the variant
    M3Net<float> model(cfg);

    const std::string path = (dir / "model.ckpt").string();
    save_checkpoint(model, path);
    auto loaded = load_checkpoint<float>(path);

    CHECK(loaded.config().experts == 1);
    CHECK(loaded.config().variant == Variant::NoMoe);
    CHECK(loaded.config().nodes == 8);
    REQUIRE(loaded.store().size() == model.store().size());
    for (std::size_t i = 0; i < model.store().size(); ++i) {
        CHECK(loaded.store()[i].name == model.store()[i].name);
        CHECK(bit_equal(loaded.store()[i].value, model.store()[i].value));
    }

    // Identical bytes when saved again.
    const std::string path2 = (dir / "model2.ckpt").string();
    save_checkpoint(loaded, path2);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
    std::filesystem::remove_all(dir);
}

TEST_CASE("checkpoint corruption and version mismatches are named errors") {
    auto dir = fresh_dir("ckpt_bad");
    ModelConfig cfg = pems08_defaults();
    cfg.nodes = 4;
    cfg.num_layers = 1;
    M3Net<float> model(cfg);
    const std::string path = (dir / "model.ckpt").string();
    save_checkpoint(model, path);

    {  // flip one magic byte
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(2);
        f.put('x');
    }
    CHECK_THROWS_AS(load_checkpoint<float>(path), CorruptError);

    save_checkpoint(model, path);
    {  // bump the version field
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(10);
        f.put(char(9));
    }
    CHECK_THROWS_WITH_AS(load_checkpoint<float>(path), doctest::Contains("version"),
                         CorruptError);

    save_checkpoint(model, path);
    const auto full = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, full - 37);
    CHECK_THROWS_AS(load_checkpoint<float>(path), CorruptError);

    CHECK_THROWS_AS(load_checkpoint<float>((dir / "nope.ckpt").string()), IoError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("model config text round trip keeps every field") {
    ModelConfig cfg;
    cfg.nodes = 33;
    cfg.history_len = 6;
    cfg.horizon = 9;
    cfg.channels = 2;
    cfg.feature_dim = 8;
    cfg.node_dim = 16;
    cfg.tod_dim = 4;
    cfg.dow_dim = 4;
    cfg.tod_period = 48;
    cfg.groups = 3;
    cfg.experts = 5;
    cfg.num_layers = 2;
    cfg.variant = Variant::NoGrouping;
    cfg.moe_residual = false;
    cfg.grouping_softmax = true;
    cfg.seed = 987654321;
    ModelConfig back = ModelConfig::from_text(cfg.to_text());
    CHECK(back.nodes == 33);
    CHECK(back.history_len == 6);
    CHECK(back.horizon == 9);
    CHECK(back.channels == 2);
    CHECK(back.feature_dim == 8);
    CHECK(back.node_dim == 16);
    CHECK(back.tod_period == 48);
    CHECK(back.groups == 3);
    CHECK(back.experts == 5);
    CHECK(back.num_layers == 2);
    CHECK(back.variant == Variant::NoGrouping);
    CHECK(back.moe_residual == false);
    CHECK(back.grouping_softmax == true);
    CHECK(back.seed == 987654321);

    CHECK_THROWS_AS(ModelConfig::from_text("nodes = 0\n"), ConfigError);
}

TEST_CASE("full default-architecture toy model passes the masked-MAE gradient check") {
    // All parameters, embedding through regression, against central
    // differences in double precision.
    ToyModelSpec spec;
    spec.part_dim = 2;  // hidden width 8
    M3Net<double> model(toy_model_config(spec));
    ToyObjective obj = make_toy_objective(model, 505);
    auto report = grad_check(model.store(), [&](bool g) { return obj(g); }, 1e-5, 1e-4);
    for (const auto& e : report.entries) {
        INFO(e.name, " rel err ", e.max_rel_err);
        CHECK(e.pass);
    }
    CHECK(report.all_pass);
}
