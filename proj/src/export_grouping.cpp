#include "m3net/export_grouping.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "m3net/errors.hpp"

namespace m3net {

void write_matrix_csv(const std::string& path, const Tensor<float>& m) {
    if (m.rank() != 2) throw ShapeError("write_matrix_csv: expected a matrix");
    std::ofstream out(path);
    if (!out) throw IoError("cannot write csv: " + path);
    char buf[64];
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(m.at(i, j)));
            if (j) out << ',';
            out << buf;
        }
        out << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

Tensor<float> read_matrix_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("csv not found: " + path);
    std::vector<std::vector<float>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<float> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stof(cell));
        if (!rows.empty() && row.size() != rows.front().size())
            throw CorruptError("ragged csv: " + path);
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw CorruptError("empty csv: " + path);
    Tensor<float> m({rows.size(), rows.front().size()});
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows.front().size(); ++j) m.at(i, j) = rows[i][j];
    return m;
}

namespace {

struct Rgb {
    int r, g, b;
};

// Blue through white to red.
Rgb diverging(double t) {
    const Rgb cool{59, 76, 192}, mid{245, 245, 245}, warm{180, 4, 38};
    auto lerp = [](int a, int b, double u) {
        return static_cast<int>(a + (b - a) * u + 0.5);
    };
    if (t < 0.5) {
        const double u = t * 2.0;
        return {lerp(cool.r, mid.r, u), lerp(cool.g, mid.g, u), lerp(cool.b, mid.b, u)};
    }
    const double u = (t - 0.5) * 2.0;
    return {lerp(mid.r, warm.r, u), lerp(mid.g, warm.g, u), lerp(mid.b, warm.b, u)};
}

}  // namespace

void write_heatmap_svg(const std::string& path, const Tensor<float>& m,
                       const std::string& title) {
    if (m.rank() != 2) throw ShapeError("write_heatmap_svg: expected a matrix");
    const std::size_t rows = m.rows(), cols = m.cols();

    float lo = m.data[0], hi = m.data[0];
    for (float v : m.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const bool flat = !(hi > lo);

    // Nodes run down the vertical axis, groups across the horizontal one.
    const int cell_w = static_cast<int>(std::clamp<std::size_t>(720 / cols, 4, 48));
    const int cell_h = static_cast<int>(std::clamp<std::size_t>(720 / rows, 2, 24));
    const int margin = 28;
    const int width = margin * 2 + cell_w * static_cast<int>(cols);
    const int height = margin * 2 + cell_h * static_cast<int>(rows);

    std::ofstream out(path);
    if (!out) throw IoError("cannot write svg: " + path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << margin << "\" y=\"" << margin - 10
        << "\" font-family=\"sans-serif\" font-size=\"12\">" << title << " (nodes x groups, "
        << rows << "x" << cols << ")</text>\n";
    char color[16];
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            const double t =
                flat ? 0.5 : (static_cast<double>(m.at(i, j)) - lo) / (double(hi) - lo);
            const Rgb c = diverging(t);
            std::snprintf(color, sizeof(color), "#%02x%02x%02x", c.r, c.g, c.b);
            out << "<rect x=\"" << margin + cell_w * static_cast<int>(j) << "\" y=\""
                << margin + cell_h * static_cast<int>(i) << "\" width=\"" << cell_w
                << "\" height=\"" << cell_h << "\" fill=\"" << color << "\"/>\n";
        }
    }
    out << "</svg>\n";
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace m3net
