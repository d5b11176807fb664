#include "m3net/verify.hpp"

#include <cstring>
#include <sstream>

namespace m3net {

namespace {

double rel_err(double a, double b) {
    return std::abs(a - b) / std::max(std::abs(a) + std::abs(b), 1e-3);
}

template <typename T>
Tensor<T> random_tensor(std::vector<std::size_t> shape, SplitMix64& rng, double lo = -1.0,
                        double hi = 1.0) {
    Tensor<T> t(std::move(shape));
    for (T& v : t.data) v = static_cast<T>(rng.next_real(lo, hi));
    return t;
}

std::vector<double> bias_vec(const Tensor<double>& row) {
    return {row.data.begin(), row.data.end()};
}

template <typename F>
Tensor<double> numeric_grad(Tensor<double>& x, F f, double eps = 1e-6) {
    Tensor<double> g(x.shape);
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const double saved = x.data[i];
        x.data[i] = saved + eps;
        const double up = f();
        x.data[i] = saved - eps;
        const double down = f();
        x.data[i] = saved;
        g.data[i] = (up - down) / (2 * eps);
    }
    return g;
}

double weighted_sum(const Tensor<double>& y, const Tensor<double>& w) {
    double s = 0;
    for (std::size_t i = 0; i < y.numel(); ++i) s += y.data[i] * w.data[i];
    return s;
}

double tensor_worst_rel(const Tensor<double>& a, const Tensor<double>& b) {
    double worst = 0;
    for (std::size_t i = 0; i < a.numel(); ++i)
        worst = std::max(worst, rel_err(a.data[i], b.data[i]));
    return worst;
}

VerifyGroup verify_kernel_grad(const VerifyOptions& options) {
    VerifyGroup group;
    group.name = "kernel-grad";
    double worst = 0;

    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        SplitMix64 rng(seed * 104729);
        const std::size_t m = 2 + rng.next_u64() % 4;
        const std::size_t k = 2 + rng.next_u64() % 4;
        const std::size_t n = 2 + rng.next_u64() % 4;

        auto a = random_tensor<double>({m, k}, rng);
        auto b = random_tensor<double>({k, n}, rng);
        auto w = random_tensor<double>({m, n}, rng);
        Tensor<double> da, db;
        matmul_backward(a, b, w, da, db);
        worst = std::max(worst, tensor_worst_rel(da, numeric_grad(a, [&] {
            return weighted_sum(matmul(a, b), w);
        })));
        worst = std::max(worst, tensor_worst_rel(db, numeric_grad(b, [&] {
            return weighted_sum(matmul(a, b), w);
        })));

        auto x = random_tensor<double>({m, k}, rng, -3, 3);
        auto wx = random_tensor<double>({m, k}, rng);
        worst = std::max(
            worst, tensor_worst_rel(softmax_rows_backward(softmax_rows(x), wx),
                                    numeric_grad(x, [&] {
                                        return weighted_sum(softmax_rows(x), wx);
                                    })));

        auto col = random_tensor<double>({m, 1}, rng);
        auto mat = random_tensor<double>({m, n}, rng);
        auto wm = random_tensor<double>({m, n}, rng);
        Tensor<double> dcol, dmat;
        mul_colbcast_backward(col, mat, wm, dcol, dmat);
        worst = std::max(worst, tensor_worst_rel(dcol, numeric_grad(col, [&] {
            return weighted_sum(mul(col, mat), wm);
        })));
    }

    // Full small model against central differences, masked-MAE objective.
    ToyModelSpec spec;
    spec.part_dim = 2;
    M3Net<double> model(toy_model_config(spec));
    ToyObjective obj = make_toy_objective(model, 2024);
    const bool fault = options.inject_backward_fault;
    auto eval = [&](bool with_grad) {
        const double v = obj(with_grad);
        if (with_grad && fault) model.store()[0].grad.data[0] += 0.05;
        return v;
    };
    GradCheckReport gc = grad_check(model.store(), eval, 1e-5, 1e-4);

    group.pass = worst <= 1e-4 && gc.all_pass;
    std::ostringstream detail;
    detail << "kernel fd worst " << worst << ", model fd worst " << gc.worst << " over "
           << gc.entries.size() << " parameters";
    group.detail = detail.str();
    return group;
}

VerifyGroup verify_layer_oracles() {
    VerifyGroup group;
    group.name = "layer-oracles";
    double worst = 0;

    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
        SplitMix64 rng(seed * 6151);
        const std::size_t nodes = 2 + rng.next_u64() % 5;
        const std::size_t groups = 1 + rng.next_u64() % 3;
        const std::size_t dim = 2 + rng.next_u64() % 7;
        const std::size_t experts = 1 + rng.next_u64() % 4;

        ParamStore<double> store(seed);
        SpatialMlp<double> spatial(store, "s", nodes, groups, dim, false, false);
        ChannelMoe<double> moe(store, "c", dim, experts, true);

        auto h = random_tensor<double>({nodes, dim}, rng);
        typename SpatialMlp<double>::Cache scache;
        Tensor<double> got_spatial = spatial.forward(h, scache);
        Matrix want_spatial = oracle_spatial_mix(
            to_matrix(h), to_matrix(store.find("s.grouping")->value),
            to_matrix(store.find("s.mlp.w1")->value), bias_vec(store.find("s.mlp.b1")->value),
            to_matrix(store.find("s.mlp.w2")->value), bias_vec(store.find("s.mlp.b2")->value));
        for (std::size_t i = 0; i < nodes; ++i)
            for (std::size_t j = 0; j < dim; ++j)
                worst = std::max(worst, std::abs(got_spatial.at(i, j) - want_spatial[i][j]));

        typename ChannelMoe<double>::Cache ccache;
        Tensor<double> got_moe = moe.forward(h, ccache);
        std::vector<OracleExpert> oracle_experts;
        for (std::size_t k = 0; k < experts; ++k) {
            const std::string p = "c.expert" + std::to_string(k);
            oracle_experts.push_back({to_matrix(store.find(p + ".w1")->value),
                                      bias_vec(store.find(p + ".b1")->value),
                                      to_matrix(store.find(p + ".w2")->value),
                                      bias_vec(store.find(p + ".b2")->value)});
        }
        Matrix want_moe = oracle_channel_moe(to_matrix(h),
                                             to_matrix(store.find("c.gate.weight")->value),
                                             bias_vec(store.find("c.gate.bias")->value),
                                             oracle_experts, true);
        for (std::size_t i = 0; i < nodes; ++i)
            for (std::size_t j = 0; j < dim; ++j)
                worst = std::max(worst, std::abs(got_moe.at(i, j) - want_moe[i][j]));
    }

    // Degenerate forms: zero grouping is the identity; a one-expert mixture is
    // the plain expert with residual.
    bool degenerate_ok = true;
    {
        SplitMix64 rng(4242);
        ParamStore<double> store(7);
        SpatialMlp<double> spatial(store, "s", 4, 2, 6, false, false);
        for (double& v : store.find("s.grouping")->value.data) v = 0.0;
        auto h = random_tensor<double>({4, 6}, rng);
        typename SpatialMlp<double>::Cache cache;
        Tensor<double> out = spatial.forward(h, cache);
        degenerate_ok = degenerate_ok &&
                        std::memcmp(out.data.data(), h.data.data(), sizeof(double) * h.numel()) == 0;

        ParamStore<double> store1(7);
        ChannelMoe<double> one(store1, "c", 6, 1, true);
        typename ChannelMoe<double>::Cache mc;
        Tensor<double> got = one.forward(h, mc);
        typename RowMlp<double>::Cache rc;
        RowMlp<double> expert;
        expert.w1 = store1.find("c.expert0.w1");
        expert.b1 = store1.find("c.expert0.b1");
        expert.w2 = store1.find("c.expert0.w2");
        expert.b2 = store1.find("c.expert0.b2");
        Tensor<double> want = add(h, expert.forward(h, rc));
        degenerate_ok = degenerate_ok && std::memcmp(got.data.data(), want.data.data(),
                                                     sizeof(double) * got.numel()) == 0;
    }

    group.pass = worst <= 1e-6 && degenerate_ok;
    std::ostringstream detail;
    detail << "worst transcription gap " << worst
           << (degenerate_ok ? ", degenerate forms exact" : ", degenerate forms BROKEN");
    group.detail = detail.str();
    return group;
}

VerifyGroup verify_metric_oracles() {
    VerifyGroup group;
    group.name = "metric-oracles";
    bool ok = true;
    std::ostringstream detail;

    // Hand case from the definitions.
    OracleCell hand = oracle_metric_cell({12, 16}, {10, 20}, 1.0);
    ok = ok && std::abs(hand.mae - 3.0) < 1e-12;
    ok = ok && std::abs(hand.rmse - std::sqrt(10.0)) < 1e-12;
    ok = ok && std::abs(hand.mape - 20.0) < 1e-12;

    auto loss = masked_mae_loss(Tensor<double>::of({{12, 16}}), Tensor<double>::of({{10, 20}}));
    ok = ok && std::abs(loss.value - 3.0) < 1e-12;

    // evaluate() against per-element recomputation on a tiny trained-shape model.
    ToyModelSpec spec;
    spec.layers = 1;
    M3Net<double> model(toy_model_config(spec));
    RawSeries<double> series;
    series.interval_minutes = 60;
    series.start_weekday = 0;
    series.name = "verify";
    SplitMix64 rng(31337);
    series.data = Tensor<double>({40, spec.nodes, 1});
    for (double& v : series.data.data) v = rng.next_real(50.0, 250.0);
    NormStats stats = compute_stats(series, 40);
    SplitSpec split{1.0, 0.0, 0.0};
    auto splits = make_windows(series, spec.history, spec.horizon, 1, stats, split);

    MetricsReport got = evaluate(model, splits.train, stats, 1.0, 1);
    const int horizon = model.config().horizon;
    std::vector<std::vector<double>> pred_by_h(horizon), target_by_h(horizon);
    for (std::size_t i = 0; i < splits.train.size(); ++i) {
        auto s = splits.train.get(i);
        Tensor<double> pred = model.predict(s.x, s.tod_idx, s.dow_idx, stats);
        for (int h = 0; h < horizon; ++h)
            for (std::size_t n = 0; n < spec.nodes; ++n) {
                pred_by_h[h].push_back(pred.at(n, h));
                target_by_h[h].push_back(s.y.at(h, n));
            }
    }
    std::vector<double> all_pred, all_target;
    for (int h = 0; h < horizon; ++h) {
        OracleCell cell = oracle_metric_cell(pred_by_h[h], target_by_h[h], 1.0);
        const MetricCell& mine = got.at_horizon(h + 1);
        ok = ok && std::abs(cell.mae - mine.mae) < 1e-6 &&
             std::abs(cell.rmse - mine.rmse) < 1e-6 && std::abs(cell.mape - mine.mape) < 1e-6;
        all_pred.insert(all_pred.end(), pred_by_h[h].begin(), pred_by_h[h].end());
        all_target.insert(all_target.end(), target_by_h[h].begin(), target_by_h[h].end());
    }
    OracleCell avg = oracle_metric_cell(all_pred, all_target, 1.0);
    ok = ok && std::abs(avg.mae - got.avg.mae) < 1e-6 && std::abs(avg.rmse - got.avg.rmse) < 1e-6;

    // Optimizer against the recurrence, 100 random steps.
    double adam_worst = 0;
    {
        ParamStore<double> store(17);
        auto& p = store.create_zeros("p", {1, 1});
        OracleAdamState ostate;
        double otheta = 0;
        SplitMix64 grng(555);
        for (int step = 0; step < 100; ++step) {
            const double g = grng.next_real(-2, 2);
            const double lr = 0.01 * grng.next_real(0.1, 1.0);
            p.grad.at(0, 0) = g;
            adam_step(store, lr);
            otheta = oracle_adam_update(ostate, otheta, g, lr);
            adam_worst = std::max(adam_worst, std::abs(otheta - p.value.at(0, 0)));
        }
        ok = ok && adam_worst <= 1e-12;
    }

    group.pass = ok;
    detail << "hand cells exact, evaluate matches loops, adam gap " << adam_worst;
    group.detail = detail.str();
    return group;
}

VerifyGroup verify_determinism() {
    VerifyGroup group;
    group.name = "determinism";
    bool ok = true;

    ToyModelSpec spec;
    M3Net<double> a(toy_model_config(spec));
    M3Net<double> b(toy_model_config(spec));
    SplitMix64 rng(808);
    auto x = random_tensor<double>({static_cast<std::size_t>(spec.history), spec.nodes, 1}, rng);
    typename M3Net<double>::Cache ca, cb;
    Tensor<double> ya = a.forward(x, 1, 2, ca);
    Tensor<double> yb = b.forward(x, 1, 2, cb);
    ok = ok && std::memcmp(ya.data.data(), yb.data.data(), sizeof(double) * ya.numel()) == 0;

    ok = ok && shuffled_indices(1000, 5, 3) == shuffled_indices(1000, 5, 3);
    ok = ok && shuffled_indices(1000, 5, 3) != shuffled_indices(1000, 6, 3);
    ok = ok && shuffled_indices(1000, 5, 3) != shuffled_indices(1000, 5, 4);

    auto m1 = random_tensor<double>({9, 7}, rng);
    auto m2 = random_tensor<double>({7, 11}, rng);
    auto p1 = matmul(m1, m2);
    auto p2 = matmul(m1, m2);
    ok = ok && std::memcmp(p1.data.data(), p2.data.data(), sizeof(double) * p1.numel()) == 0;

    group.pass = ok;
    group.detail = ok ? "same seeds give identical bits" : "nondeterminism detected";
    return group;
}

}  // namespace

VerifyReport run_verification(const VerifyOptions& options) {
    VerifyReport report;
    report.groups.push_back(verify_kernel_grad(options));
    report.groups.push_back(verify_layer_oracles());
    report.groups.push_back(verify_metric_oracles());
    report.groups.push_back(verify_determinism());
    for (const VerifyGroup& g : report.groups) report.all_pass = report.all_pass && g.pass;
    return report;
}

}  // namespace m3net
