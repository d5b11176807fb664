#pragma once

// Self-check suite behind the `verify` command, plus the independent oracles
// it compares against. The oracles are deliberate straight-line re-readings of
// the layer equations and optimizer recurrence over plain loops; they share no
// code with the kernels they check.

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "m3net/grad_check.hpp"
#include "m3net/metrics.hpp"
#include "m3net/model.hpp"
#include "m3net/rng.hpp"
#include "m3net/tensor.hpp"
#include "m3net/trainer.hpp"

namespace m3net {

using Matrix = std::vector<std::vector<double>>;

inline Matrix zeros_matrix(std::size_t r, std::size_t c) {
    return Matrix(r, std::vector<double>(c, 0.0));
}

inline Matrix to_matrix(const Tensor<double>& t) {
    Matrix m = zeros_matrix(t.rows(), t.cols());
    for (std::size_t i = 0; i < t.rows(); ++i)
        for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t.at(i, j);
    return m;
}

// relu(x*W1 + b1)*W2 + b2 on each row, spelled out.
inline Matrix oracle_row_mlp(const Matrix& x, const Matrix& w1, const std::vector<double>& b1,
                             const Matrix& w2, const std::vector<double>& b2) {
    const std::size_t rows = x.size(), dim = w1.size(), out_dim = w2[0].size();
    Matrix hidden = zeros_matrix(rows, w1[0].size());
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < w1[0].size(); ++j) {
            double acc = b1[j];
            for (std::size_t p = 0; p < dim; ++p) acc += x[i][p] * w1[p][j];
            hidden[i][j] = acc > 0 ? acc : 0;
        }
    Matrix out = zeros_matrix(rows, out_dim);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < out_dim; ++j) {
            double acc = b2[j];
            for (std::size_t p = 0; p < w2.size(); ++p) acc += hidden[i][p] * w2[p][j];
            out[i][j] = acc;
        }
    return out;
}

// Aggregate with the grouping matrix, transform the group rows, scatter back,
// add the residual: grouped = G^T H; mixed = MLP(grouped); out = H + G*mixed.
inline Matrix oracle_spatial_mix(const Matrix& h, const Matrix& g, const Matrix& w1,
                                 const std::vector<double>& b1, const Matrix& w2,
                                 const std::vector<double>& b2) {
    const std::size_t nodes = h.size(), dim = h[0].size(), groups = g[0].size();
    Matrix grouped = zeros_matrix(groups, dim);
    for (std::size_t r = 0; r < groups; ++r)
        for (std::size_t d = 0; d < dim; ++d) {
            double acc = 0;
            for (std::size_t n = 0; n < nodes; ++n) acc += g[n][r] * h[n][d];
            grouped[r][d] = acc;
        }
    Matrix mixed = oracle_row_mlp(grouped, w1, b1, w2, b2);
    Matrix out = zeros_matrix(nodes, dim);
    for (std::size_t n = 0; n < nodes; ++n)
        for (std::size_t d = 0; d < dim; ++d) {
            double acc = 0;
            for (std::size_t r = 0; r < groups; ++r) acc += g[n][r] * mixed[r][d];
            out[n][d] = h[n][d] + acc;
        }
    return out;
}

struct OracleExpert {
    Matrix w1;
    std::vector<double> b1;
    Matrix w2;
    std::vector<double> b2;
};

// Gate weights via row softmax of h*Wg + bg, each expert applied to the whole
// input, outputs blended per node: out = [h +] sum_k alpha[:,k] (.) O_k.
inline Matrix oracle_channel_moe(const Matrix& h, const Matrix& gate_w,
                                 const std::vector<double>& gate_b,
                                 const std::vector<OracleExpert>& experts, bool residual) {
    const std::size_t nodes = h.size(), dim = h[0].size(), K = experts.size();
    Matrix alpha = zeros_matrix(nodes, K);
    for (std::size_t n = 0; n < nodes; ++n) {
        std::vector<double> logits(K);
        for (std::size_t k = 0; k < K; ++k) {
            double acc = gate_b[k];
            for (std::size_t d = 0; d < dim; ++d) acc += h[n][d] * gate_w[d][k];
            logits[k] = acc;
        }
        double mx = logits[0];
        for (double v : logits) mx = std::max(mx, v);
        double sum = 0;
        for (std::size_t k = 0; k < K; ++k) {
            alpha[n][k] = std::exp(logits[k] - mx);
            sum += alpha[n][k];
        }
        for (std::size_t k = 0; k < K; ++k) alpha[n][k] /= sum;
    }
    Matrix out = zeros_matrix(nodes, dim);
    for (std::size_t k = 0; k < K; ++k) {
        Matrix o = oracle_row_mlp(h, experts[k].w1, experts[k].b1, experts[k].w2, experts[k].b2);
        for (std::size_t n = 0; n < nodes; ++n)
            for (std::size_t d = 0; d < dim; ++d) out[n][d] += alpha[n][k] * o[n][d];
    }
    if (residual)
        for (std::size_t n = 0; n < nodes; ++n)
            for (std::size_t d = 0; d < dim; ++d) out[n][d] += h[n][d];
    return out;
}

// The Adam recurrence written out once more, one scalar at a time.
struct OracleAdamState {
    double m = 0, v = 0;
    std::int64_t t = 0;
};

inline double oracle_adam_update(OracleAdamState& s, double theta, double g, double lr,
                                 double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
    s.t += 1;
    s.m = beta1 * s.m + (1 - beta1) * g;
    s.v = beta2 * s.v + (1 - beta2) * g * g;
    const double mhat = s.m / (1 - std::pow(beta1, static_cast<double>(s.t)));
    const double vhat = s.v / (1 - std::pow(beta2, static_cast<double>(s.t)));
    return theta - lr * mhat / (std::sqrt(vhat) + eps);
}

// Per-cell metrics recomputed entry by entry with fresh loops.
struct OracleCell {
    double mae = 0, rmse = 0, mape = 0;
};

inline OracleCell oracle_metric_cell(const std::vector<double>& pred,
                                     const std::vector<double>& target, double mape_threshold) {
    OracleCell c;
    double abs_sum = 0, sq_sum = 0, ratio_sum = 0;
    std::size_t n = 0, n_mape = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double e = pred[i] - target[i];
        abs_sum += std::abs(e);
        sq_sum += e * e;
        ++n;
        if (std::abs(target[i]) > mape_threshold) {
            ratio_sum += std::abs(e) / std::abs(target[i]);
            ++n_mape;
        }
    }
    if (n) {
        c.mae = abs_sum / n;
        c.rmse = std::sqrt(sq_sum / n);
    }
    if (n_mape) c.mape = 100.0 * ratio_sum / n_mape;
    return c;
}

// ---------------------------------------------------------------------------
// Small model + objective used by the verification groups and tests.

struct ToyModelSpec {
    std::size_t nodes = 5;
    int groups = 2;
    int experts = 2;
    int part_dim = 2;  // per embedding part; hidden width = 4 * part_dim
    int history = 4;
    int horizon = 4;
    std::uint64_t seed = 99;
    Variant variant = Variant::Full;
    int layers = 1;
};

inline ModelConfig toy_model_config(const ToyModelSpec& spec) {
    ModelConfig cfg;
    cfg.nodes = spec.nodes;
    cfg.history_len = spec.history;
    cfg.horizon = spec.horizon;
    cfg.channels = 1;
    cfg.feature_dim = cfg.node_dim = cfg.tod_dim = cfg.dow_dim = spec.part_dim;
    cfg.tod_period = 24;
    cfg.dow_period = 7;
    cfg.groups = spec.groups;
    cfg.experts = spec.experts;
    cfg.num_layers = spec.layers;
    cfg.variant = spec.variant;
    cfg.seed = spec.seed;
    return cfg;
}

// Masked-MAE objective of one random sample through a model; the closure fits
// the grad_check contract.
struct ToyObjective {
    M3Net<double>* model;
    Tensor<double> x;
    Tensor<double> target;  // nodes x horizon, raw scale
    NormStats stats;
    int tod = 3, dow = 2;

    double operator()(bool with_grad) const {
        typename M3Net<double>::Cache cache;
        Tensor<double> pred = model->forward(x, tod, dow, cache);
        for (double& v : pred.data) v = denormalize_flow(v, stats);
        auto loss = masked_mae_loss(pred, target, true);
        if (with_grad) {
            model->store().zero_grads();
            GradBuffer<double> grads(model->store());
            Tensor<double> d_pred = loss.grad;
            for (double& v : d_pred.data) v *= stats.std[0];
            model->backward(cache, d_pred, grads);
            grads.flush_to(model->store());
        }
        return loss.value;
    }
};

inline ToyObjective make_toy_objective(M3Net<double>& model, std::uint64_t seed) {
    const ModelConfig& cfg = model.config();
    SplitMix64 rng(seed);
    ToyObjective obj;
    obj.model = &model;
    obj.x = Tensor<double>({static_cast<std::size_t>(cfg.history_len), cfg.nodes,
                            static_cast<std::size_t>(cfg.channels)});
    for (double& v : obj.x.data) v = rng.next_real(-1.5, 1.5);
    obj.target = Tensor<double>({cfg.nodes, static_cast<std::size_t>(cfg.horizon)});
    for (double& v : obj.target.data) v = rng.next_real(40.0, 260.0);
    obj.stats.mean = {150.0};
    obj.stats.std = {55.0};
    return obj;
}

// ---------------------------------------------------------------------------
// Verification groups

struct VerifyOptions {
    // Test fixture: perturbs the analytic gradients fed to the checker, as a
    // broken backward would.
    bool inject_backward_fault = false;
};

struct VerifyGroup {
    std::string name;
    bool pass = true;
    std::string detail;
};

struct VerifyReport {
    std::vector<VerifyGroup> groups;
    bool all_pass = true;
};

VerifyReport run_verification(const VerifyOptions& options = {});

}  // namespace m3net
