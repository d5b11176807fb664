#pragma once

// Central finite-difference verification of analytic gradients over a whole
// parameter store. Meant to run in double precision.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "m3net/errors.hpp"
#include "m3net/param.hpp"

namespace m3net {

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    bool pass = true;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    bool all_pass = true;
    double worst = 0.0;
};

// eval(with_grad): returns the scalar objective; when with_grad is true it must
// also leave fresh analytic gradients in Parameter::grad (zeroing them first is
// the callee's job). The objective must be deterministic.
inline GradCheckReport grad_check(ParamStore<double>& store,
                                  const std::function<double(bool with_grad)>& eval,
                                  double eps = 1e-5, double tol = 1e-4) {
    if (!(eps >= 1e-7 && eps <= 1e-3))
        throw ConfigError("grad_check: eps " + std::to_string(eps) + " outside [1e-7, 1e-3]");

    store.zero_grads();
    const double base = eval(true);
    if (!std::isfinite(base)) throw ConfigError("grad_check: objective is non-finite");

    std::vector<std::vector<double>> analytic(store.size());
    for (std::size_t pi = 0; pi < store.size(); ++pi) analytic[pi] = store[pi].grad.data;

    GradCheckReport report;
    for (std::size_t pi = 0; pi < store.size(); ++pi) {
        Parameter<double>& p = store[pi];
        GradCheckEntry entry;
        entry.name = p.name;
        for (std::size_t i = 0; i < p.numel(); ++i) {
            const double saved = p.value.data[i];
            p.value.data[i] = saved + eps;
            const double up = eval(false);
            p.value.data[i] = saved - eps;
            const double down = eval(false);
            p.value.data[i] = saved;
            if (!std::isfinite(up) || !std::isfinite(down))
                throw ConfigError("grad_check: non-finite objective while perturbing " +
                                  p.name);
            const double numeric = (up - down) / (2.0 * eps);
            const double a = analytic[pi][i];
            const double rel =
                std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), 1e-3);
            if (rel > entry.max_rel_err) entry.max_rel_err = rel;
        }
        entry.pass = entry.max_rel_err <= tol;
        report.worst = std::max(report.worst, entry.max_rel_err);
        report.all_pass = report.all_pass && entry.pass;
        report.entries.push_back(std::move(entry));
    }
    return report;
}

}  // namespace m3net
