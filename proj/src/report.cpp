#include <cstdio>
#include <string>
#include <vector>

#include "m3net/metrics.hpp"

namespace m3net {

namespace {

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

std::string pad_left(const std::string& s, std::size_t width) {
    return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

}  // namespace

std::string format_metrics_report(const MetricsReport& report) {
    const int horizon = static_cast<int>(report.per_horizon.size());
    std::vector<int> steps;
    for (int h : {3, 6, 12})
        if (h <= horizon) steps.push_back(h);
    if (steps.empty() && horizon > 0) steps.push_back(horizon);

    const std::size_t w = 10;
    std::string out;
    out += pad_left("metric", w);
    for (int h : steps) out += pad_left("@" + std::to_string(h), w);
    out += pad_left("Avg.", w);
    out += '\n';

    auto row = [&](const char* label, auto pick) {
        out += pad_left(label, w);
        for (int h : steps) out += pad_left(fixed(pick(report.at_horizon(h)), 2), w);
        out += pad_left(fixed(pick(report.avg), 2), w);
        out += '\n';
    };
    row("MAE", [](const MetricCell& c) { return c.mae; });
    row("RMSE", [](const MetricCell& c) { return c.rmse; });
    row("MAPE(%)", [](const MetricCell& c) { return c.mape; });

    out += '\n';
    for (int h : steps) {
        const MetricCell& c = report.at_horizon(h);
        out += "mae@" + std::to_string(h) + " = " + fixed(c.mae, 4) + "\n";
        out += "rmse@" + std::to_string(h) + " = " + fixed(c.rmse, 4) + "\n";
        out += "mape@" + std::to_string(h) + " = " + fixed(c.mape, 4) + "\n";
    }
    out += "mae_avg = " + fixed(report.avg.mae, 4) + "\n";
    out += "rmse_avg = " + fixed(report.avg.rmse, 4) + "\n";
    out += "mape_avg = " + fixed(report.avg.mape, 4) + "\n";
    return out;
}

}  // namespace m3net
