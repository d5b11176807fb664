#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "m3net/embedding.hpp"
#include "m3net/grad_check.hpp"
#include "m3net/m3_layer.hpp"
#include "m3net/verify.hpp"
#include "test_util.hpp"

using namespace m3net;
using m3test::bit_equal;
using m3test::random_tensor;

namespace {

EmbeddingDims small_dims() {
    EmbeddingDims d;
    d.history_len = 3;
    d.channels = 1;
    d.feature_dim = 4;
    d.node_dim = 4;
    d.tod_dim = 4;
    d.dow_dim = 4;
    d.tod_period = 24;
    d.dow_period = 7;
    return d;
}

// Identity inner perceptron: relu passes positives through, so for positive
// intermediate rows the MLP is the identity map.
template <typename T>
void make_identity_mlp(ParamStore<T>& store, const std::string& prefix, std::size_t dim) {
    auto set_identity = [&](const std::string& name) {
        Tensor<T>& w = store.find(name)->value;
        for (T& v : w.data) v = T(0);
        for (std::size_t i = 0; i < dim; ++i) w.at(i, i) = T(1);
    };
    auto set_zero = [&](const std::string& name) {
        for (T& v : store.find(name)->value.data) v = T(0);
    };
    set_identity(prefix + ".w1");
    set_zero(prefix + ".b1");
    set_identity(prefix + ".w2");
    set_zero(prefix + ".b2");
}

}  // namespace

TEST_CASE("embed: zero parameters give a zero representation of the right shape") {
    ParamStore<float> store(1);
    EmbeddingLayer<float> layer(store, small_dims(), 5);
    for (std::size_t i = 0; i < store.size(); ++i)
        for (float& v : store[i].value.data) v = 0;

    SplitMix64 rng(2);
    auto x = random_tensor<float>({3, 5, 1}, rng);
    EmbeddingLayer<float>::Cache cache;
    auto h = layer.forward(x, 0, 0, cache);
    CHECK(h.shape == std::vector<std::size_t>{5, 16});
    for (float v : h.data) CHECK(v == 0.0f);
}

TEST_CASE("embed: default widths produce nodes x 128") {
    EmbeddingDims dims;  // defaults: L=12, C=1, 4 x 32
    ParamStore<float> store(3);
    EmbeddingLayer<float> layer(store, dims, 7);
    SplitMix64 rng(4);
    auto x = random_tensor<float>({12, 7, 1}, rng);
    EmbeddingLayer<float>::Cache cache;
    auto h = layer.forward(x, 100, 3, cache);
    CHECK(h.shape == std::vector<std::size_t>{7, 128});
}

TEST_CASE("embed: temporal index only moves its own column block") {
    ParamStore<double> store(5);
    auto dims = small_dims();
    EmbeddingLayer<double> layer(store, dims, 4);
    SplitMix64 rng(6);
    auto x = random_tensor<double>({3, 4, 1}, rng);
    EmbeddingLayer<double>::Cache c1, c2;
    auto h1 = layer.forward(x, 5, 2, c1);
    auto h2 = layer.forward(x, 6, 2, c2);

    const std::size_t tod_off = dims.feature_dim + dims.node_dim;
    for (std::size_t n = 0; n < 4; ++n)
        for (std::size_t j = 0; j < 16; ++j) {
            if (j >= tod_off && j < tod_off + 4)
                CHECK(h1.at(n, j) != h2.at(n, j));
            else
                CHECK(h1.at(n, j) == h2.at(n, j));
        }

    // Perturbing the day-of-week table touches only the last block.
    auto& dow = store.find("embedding.dow_table")->value;
    for (double& v : dow.data) v += 0.5;
    EmbeddingLayer<double>::Cache c3;
    auto h3 = layer.forward(x, 5, 2, c3);
    for (std::size_t n = 0; n < 4; ++n)
        for (std::size_t j = 0; j < 16; ++j) {
            if (j >= 12)
                CHECK(h1.at(n, j) != h3.at(n, j));
            else
                CHECK(h1.at(n, j) == h3.at(n, j));
        }
}

TEST_CASE("embed: out-of-range lookups are bounds errors") {
    ParamStore<float> store(7);
    EmbeddingLayer<float> layer(store, small_dims(), 4);
    SplitMix64 rng(8);
    auto x = random_tensor<float>({3, 4, 1}, rng);
    EmbeddingLayer<float>::Cache cache;
    CHECK_THROWS_WITH_AS(layer.forward(x, 24, 0, cache), doctest::Contains("24"), BoundsError);
    CHECK_THROWS_AS(layer.forward(x, 0, 7, cache), BoundsError);
    CHECK_THROWS_AS(layer.forward(x, -1, 0, cache), BoundsError);
}

TEST_CASE("embed: gradients land only in the looked-up table rows") {
    ParamStore<double> store(9);
    auto dims = small_dims();
    EmbeddingLayer<double> layer(store, dims, 4);
    SplitMix64 rng(10);
    auto x = random_tensor<double>({3, 4, 1}, rng);
    EmbeddingLayer<double>::Cache cache;
    auto h = layer.forward(x, 5, 2, cache);

    GradBuffer<double> grads(store);
    auto w = random_tensor<double>({4, 16}, rng);
    layer.backward(cache, w, grads);
    grads.flush_to(store);

    const Tensor<double>& tod_grad = store.find("embedding.tod_table")->grad;
    for (std::size_t r = 0; r < 24; ++r)
        for (std::size_t j = 0; j < 4; ++j) {
            if (r == 5)
                CHECK(tod_grad.at(r, j) != 0.0);
            else
                CHECK(tod_grad.at(r, j) == 0.0);
        }
    const Tensor<double>& dow_grad = store.find("embedding.dow_table")->grad;
    for (std::size_t r = 0; r < 7; ++r)
        for (std::size_t j = 0; j < 4; ++j) CHECK((r == 2 ? dow_grad.at(r, j) != 0.0
                                                          : dow_grad.at(r, j) == 0.0));
}

TEST_CASE("embed is affine in the history: feature block superposes") {
    ParamStore<double> store(11);
    auto dims = small_dims();
    EmbeddingLayer<double> layer(store, dims, 4);
    SplitMix64 rng(12);
    auto x1 = random_tensor<double>({3, 4, 1}, rng);
    auto x2 = random_tensor<double>({3, 4, 1}, rng);
    const double a = 0.7, b = -1.3;
    Tensor<double> mix = x1;
    for (std::size_t i = 0; i < mix.numel(); ++i)
        mix.data[i] = a * x1.data[i] + b * x2.data[i];

    EmbeddingLayer<double>::Cache c;
    auto h1 = layer.forward(x1, 0, 0, c);
    auto h2 = layer.forward(x2, 0, 0, c);
    auto hmix = layer.forward(mix, 0, 0, c);
    auto zero = layer.forward(Tensor<double>({3, 4, 1}), 0, 0, c);  // isolates the bias

    for (std::size_t n = 0; n < 4; ++n)
        for (std::size_t j = 0; j < std::size_t(dims.feature_dim); ++j) {
            const double lhs = hmix.at(n, j) - zero.at(n, j);
            const double rhs = a * (h1.at(n, j) - zero.at(n, j)) + b * (h2.at(n, j) - zero.at(n, j));
            CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
        }
}

TEST_CASE("spatial_mix: zero grouping is the exact identity") {
    ParamStore<double> store(13);
    SpatialMlp<double> spatial(store, "s", 6, 3, 8, false, false);
    for (double& v : store.find("s.grouping")->value.data) v = 0.0;
    SplitMix64 rng(14);
    auto h = random_tensor<double>({6, 8}, rng);
    SpatialMlp<double>::Cache cache;
    CHECK(bit_equal(spatial.forward(h, cache), h));
}

TEST_CASE("spatial_mix: one-hot grouping with identity perceptron, hand case") {
    ParamStore<double> store(15);
    SpatialMlp<double> spatial(store, "s", 3, 2, 2, false, false);
    store.find("s.grouping")->value = Tensor<double>::of({{1, 0}, {1, 0}, {0, 1}});
    make_identity_mlp(store, "s.mlp", 2);

    auto h = Tensor<double>::of({{1, 2}, {3, 4}, {5, 6}});
    SpatialMlp<double>::Cache cache;
    auto out = spatial.forward(h, cache);
    // Group sums broadcast back: rows 0 and 1 get {4,6}, row 2 gets {5,6}.
    CHECK(bit_equal(out, Tensor<double>::of({{5, 8}, {7, 10}, {10, 12}})));
}

TEST_CASE("spatial_mix and channel_moe match the straight-line oracles") {
    double worst = 0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        SplitMix64 rng(seed * 2713);
        const std::size_t nodes = 2 + rng.next_u64() % 7;
        const std::size_t groups = 1 + rng.next_u64() % 4;
        const std::size_t dim = 2 + rng.next_u64() % 15;
        const std::size_t experts = 1 + rng.next_u64() % 5;
        const bool residual = (rng.next_u64() & 1) != 0;

        ParamStore<double> store(seed);
        SpatialMlp<double> spatial(store, "s", nodes, groups, dim, false, false);
        ChannelMoe<double> moe(store, "c", dim, experts, residual);
        auto h = random_tensor<double>({nodes, dim}, rng);

        SpatialMlp<double>::Cache scache;
        auto got_s = spatial.forward(h, scache);
        auto want_s = oracle_spatial_mix(
            to_matrix(h), to_matrix(store.find("s.grouping")->value),
            to_matrix(store.find("s.mlp.w1")->value),
            {store.find("s.mlp.b1")->value.data.begin(), store.find("s.mlp.b1")->value.data.end()},
            to_matrix(store.find("s.mlp.w2")->value),
            {store.find("s.mlp.b2")->value.data.begin(), store.find("s.mlp.b2")->value.data.end()});
        for (std::size_t i = 0; i < nodes; ++i)
            for (std::size_t j = 0; j < dim; ++j)
                worst = std::max(worst, std::abs(got_s.at(i, j) - want_s[i][j]));

        ChannelMoe<double>::Cache ccache;
        auto got_c = moe.forward(h, ccache);
        std::vector<OracleExpert> oes;
        for (std::size_t k = 0; k < experts; ++k) {
            const std::string p = "c.expert" + std::to_string(k);
            oes.push_back(
                {to_matrix(store.find(p + ".w1")->value),
                 {store.find(p + ".b1")->value.data.begin(), store.find(p + ".b1")->value.data.end()},
                 to_matrix(store.find(p + ".w2")->value),
                 {store.find(p + ".b2")->value.data.begin(), store.find(p + ".b2")->value.data.end()}});
        }
        auto want_c = oracle_channel_moe(
            to_matrix(h), to_matrix(store.find("c.gate.weight")->value),
            {store.find("c.gate.bias")->value.data.begin(),
             store.find("c.gate.bias")->value.data.end()},
            oes, residual);
        for (std::size_t i = 0; i < nodes; ++i)
            for (std::size_t j = 0; j < dim; ++j)
                worst = std::max(worst, std::abs(got_c.at(i, j) - want_c[i][j]));
    }
    CHECK(worst <= 1e-6);
}

TEST_CASE("channel_moe: one expert degenerates to expert plus residual, bitwise") {
    ParamStore<double> store(17);
    ChannelMoe<double> moe(store, "c", 6, 1, true);
    SplitMix64 rng(18);
    auto h = random_tensor<double>({5, 6}, rng);

    ChannelMoe<double>::Cache cache;
    auto got = moe.forward(h, cache);

    // Independent route: run the sole expert directly with the same weights.
    RowMlp<double> expert;
    expert.w1 = store.find("c.expert0.w1");
    expert.b1 = store.find("c.expert0.b1");
    expert.w2 = store.find("c.expert0.w2");
    expert.b2 = store.find("c.expert0.b2");
    RowMlp<double>::Cache rc;
    auto want = add(h, expert.forward(h, rc));
    CHECK(bit_equal(got, want));

    // The gate weights are irrelevant with one expert.
    for (double& v : store.find("c.gate.weight")->value.data) v += 3.0;
    ChannelMoe<double>::Cache cache2;
    CHECK(bit_equal(moe.forward(h, cache2), want));
}

TEST_CASE("channel_moe: opposite experts under a uniform gate cancel") {
    ParamStore<double> store(19);
    ChannelMoe<double> moe(store, "c", 4, 2, true);
    // Uniform gate: zero weights and bias.
    for (double& v : store.find("c.gate.weight")->value.data) v = 0.0;
    for (double& v : store.find("c.gate.bias")->value.data) v = 0.0;
    // Expert 1 mirrors expert 0 with a negated output layer.
    for (auto leaf : {".w1", ".b1"}) {
        store.find("c.expert1" + std::string(leaf))->value =
            store.find("c.expert0" + std::string(leaf))->value;
    }
    for (auto leaf : {".w2", ".b2"}) {
        Tensor<double> w = store.find("c.expert0" + std::string(leaf))->value;
        for (double& v : w.data) v = -v;
        store.find("c.expert1" + std::string(leaf))->value = w;
    }

    SplitMix64 rng(20);
    auto h = random_tensor<double>({5, 4}, rng);
    ChannelMoe<double>::Cache cache;
    auto out = moe.forward(h, cache);
    for (std::size_t i = 0; i < out.numel(); ++i)
        CHECK(out.data[i] == doctest::Approx(h.data[i]).epsilon(1e-12));

    // Gate rows sum to one.
    for (std::size_t i = 0; i < 5; ++i)
        CHECK(cache.gate.at(i, 0) + cache.gate.at(i, 1) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("channel_moe: uniform gate makes the mixture the expert average") {
    ParamStore<double> store(21);
    ChannelMoe<double> moe(store, "c", 5, 3, true);
    for (double& v : store.find("c.gate.weight")->value.data) v = 0.0;
    for (double& v : store.find("c.gate.bias")->value.data) v = 0.0;

    SplitMix64 rng(22);
    auto h = random_tensor<double>({4, 5}, rng);
    ChannelMoe<double>::Cache cache;
    auto out = moe.forward(h, cache);

    Tensor<double> mean({4, 5});
    for (int k = 0; k < 3; ++k) {
        RowMlp<double> expert;
        const std::string p = "c.expert" + std::to_string(k);
        expert.w1 = store.find(p + ".w1");
        expert.b1 = store.find(p + ".b1");
        expert.w2 = store.find(p + ".w2");
        expert.b2 = store.find(p + ".b2");
        RowMlp<double>::Cache rc;
        add_into(mean, expert.forward(h, rc));
    }
    for (double& v : mean.data) v /= 3.0;
    for (std::size_t i = 0; i < out.numel(); ++i)
        CHECK(out.data[i] - h.data[i] == doctest::Approx(mean.data[i]).epsilon(1e-6));
}

TEST_CASE("variants: no_spatial ignores spatial parameters entirely") {
    ParamStore<double> store(23);
    M3Layer<double> layer(store, "layer0", 5, 2, 8, 2, Variant::NoSpatial, true, false);
    SplitMix64 rng(24);
    auto h = random_tensor<double>({5, 8}, rng);
    M3Layer<double>::Cache c1;
    auto out1 = layer.forward(h, c1);

    for (auto name : {"layer0.spatial.grouping", "layer0.spatial.mlp.w1",
                      "layer0.spatial.mlp.b1", "layer0.spatial.mlp.w2", "layer0.spatial.mlp.b2"})
        for (double& v : store.find(name)->value.data) v += 11.0;

    M3Layer<double>::Cache c2;
    CHECK(bit_equal(layer.forward(h, c2), out1));
}

TEST_CASE("variants: no_grouping with identity perceptron doubles the input") {
    ParamStore<double> store(25);
    M3Layer<double> layer(store, "layer0", 4, 2, 3, 2, Variant::NoGrouping, true, false);
    make_identity_mlp(store, "layer0.spatial.mlp", 3);
    SplitMix64 rng(26);
    // Positive inputs keep the relu transparent.
    auto h = random_tensor<double>({4, 3}, rng, 0.1, 2.0);

    // Check the spatial stage alone through a full layer with a pass-through
    // channel stage: zero the experts so moe output = residual input.
    for (int k = 0; k < 2; ++k) {
        const std::string p = "layer0.moe.expert" + std::to_string(k);
        for (auto leaf : {".w1", ".b1", ".w2", ".b2"})
            for (double& v : store.find(p + leaf)->value.data) v = 0.0;
    }
    M3Layer<double>::Cache cache;
    auto out = layer.forward(h, cache);
    for (std::size_t i = 0; i < out.numel(); ++i)
        CHECK(out.data[i] == doctest::Approx(2.0 * h.data[i]).epsilon(1e-12));
}

TEST_CASE("variants: unknown name is a config error") {
    CHECK_THROWS_AS(parse_variant("no_everything"), ConfigError);
    CHECK(parse_variant("no_moe") == Variant::NoMoe);
}

TEST_CASE("full stack of three layers preserves nodes x width") {
    ModelConfig cfg;
    cfg.nodes = 9;
    cfg.feature_dim = cfg.node_dim = cfg.tod_dim = cfg.dow_dim = 32;
    cfg.groups = 10;
    cfg.experts = 4;
    cfg.num_layers = 3;
    cfg.seed = 27;
    M3Net<float> model(cfg);
    SplitMix64 rng(28);
    auto x = random_tensor<float>({12, 9, 1}, rng);
    M3Net<float>::Cache cache;
    auto y = model.forward(x, 0, 0, cache);
    CHECK(cache.final_repr.shape == std::vector<std::size_t>{9, 128});
    CHECK(y.shape == std::vector<std::size_t>{9, 12});
}

TEST_CASE("spatial_mix is equivariant under simultaneous row permutation") {
    ParamStore<double> store(29);
    SpatialMlp<double> spatial(store, "s", 5, 2, 6, false, false);
    SplitMix64 rng(30);
    auto h = random_tensor<double>({5, 6}, rng);

    SpatialMlp<double>::Cache c1;
    auto base = spatial.forward(h, c1);

    const std::size_t perm[5] = {3, 0, 4, 1, 2};
    Tensor<double> hp({5, 6});
    Tensor<double> gp({5, 2});
    const Tensor<double>& g = store.find("s.grouping")->value;
    for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t j = 0; j < 6; ++j) hp.at(i, j) = h.at(perm[i], j);
        for (std::size_t j = 0; j < 2; ++j) gp.at(i, j) = g.at(perm[i], j);
    }
    store.find("s.grouping")->value = gp;
    SpatialMlp<double>::Cache c2;
    auto permuted = spatial.forward(hp, c2);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 6; ++j)
            CHECK(permuted.at(i, j) == doctest::Approx(base.at(perm[i], j)).epsilon(1e-12));
}

TEST_CASE("full layer gradients pass central differences at 1e-4") {
    // Mixing block only (no embedding): weighted-sum objective.
    ParamStore<double> store(31);
    M3Layer<double> layer(store, "layer0", 5, 2, 8, 2, Variant::Full, true, false);
    SplitMix64 rng(32);
    auto h = random_tensor<double>({5, 8}, rng);
    auto w = random_tensor<double>({5, 8}, rng);

    auto eval = [&](bool with_grad) {
        M3Layer<double>::Cache cache;
        auto out = layer.forward(h, cache);
        double s = 0;
        for (std::size_t i = 0; i < out.numel(); ++i) s += out.data[i] * w.data[i];
        if (with_grad) {
            store.zero_grads();
            GradBuffer<double> grads(store);
            layer.backward(cache, w, grads);
            grads.flush_to(store);
        }
        return s;
    };
    auto report = grad_check(store, eval, 1e-5, 1e-4);
    CHECK(report.all_pass);
    for (const auto& e : report.entries) {
        INFO(e.name, " rel err ", e.max_rel_err);
        CHECK(e.pass);
    }
}

TEST_CASE("every variant's gradients pass central differences at 1e-4") {
    for (Variant v : {Variant::NoMoe, Variant::NoSpatial, Variant::NoGrouping}) {
        CAPTURE(variant_name(v));
        ToyModelSpec spec;
        spec.variant = v;
        spec.seed = 77 + static_cast<int>(v);
        M3Net<double> model(toy_model_config(spec));
        ToyObjective obj = make_toy_objective(model, 606);
        auto report = grad_check(model.store(), [&](bool g) { return obj(g); }, 1e-5, 1e-4);
        for (const auto& e : report.entries) {
            INFO(e.name, " rel err ", e.max_rel_err);
            CHECK(e.pass);
        }
    }
}

TEST_CASE("grouping softmax option: forward uses row-normalized weights") {
    ParamStore<double> store(33);
    SpatialMlp<double> raw(store, "s", 4, 3, 5, false, false);
    ParamStore<double> store2(33);
    SpatialMlp<double> soft(store2, "s", 4, 3, 5, true, false);

    SplitMix64 rng(34);
    auto h = random_tensor<double>({4, 5}, rng);
    SpatialMlp<double>::Cache c1, c2;
    auto raw_out = raw.forward(h, c1);
    auto soft_out = soft.forward(h, c2);
    CHECK_FALSE(bit_equal(raw_out, soft_out));

    // Same parameters; the softened path must match the oracle run on the
    // row-softmax of the grouping matrix.
    auto gs = softmax_rows(store2.find("s.grouping")->value);
    auto want = oracle_spatial_mix(
        to_matrix(h), to_matrix(gs), to_matrix(store2.find("s.mlp.w1")->value),
        {store2.find("s.mlp.b1")->value.data.begin(), store2.find("s.mlp.b1")->value.data.end()},
        to_matrix(store2.find("s.mlp.w2")->value),
        {store2.find("s.mlp.b2")->value.data.begin(), store2.find("s.mlp.b2")->value.data.end()});
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 5; ++j)
            CHECK(soft_out.at(i, j) == doctest::Approx(want[i][j]).epsilon(1e-10));

    // And its gradients stay correct.
    auto w = random_tensor<double>({4, 5}, rng);
    auto eval = [&](bool with_grad) {
        SpatialMlp<double>::Cache cache;
        auto out = soft.forward(h, cache);
        double s = 0;
        for (std::size_t i = 0; i < out.numel(); ++i) s += out.data[i] * w.data[i];
        if (with_grad) {
            store2.zero_grads();
            GradBuffer<double> grads(store2);
            soft.backward(cache, w, grads);
            grads.flush_to(store2);
        }
        return s;
    };
    CHECK(grad_check(store2, eval, 1e-5, 1e-4).all_pass);
}
