#pragma once

// Grouping-matrix export: exact-value CSV plus a self-contained SVG heatmap
// with a diverging color scale (warm = high, cool = low).

#include <string>

#include "m3net/tensor.hpp"

namespace m3net {

// One row per node, one column per group. Values print with enough digits to
// re-parse to the identical float.
void write_matrix_csv(const std::string& path, const Tensor<float>& m);

Tensor<float> read_matrix_csv(const std::string& path);

void write_heatmap_svg(const std::string& path, const Tensor<float>& m,
                       const std::string& title);

}  // namespace m3net
