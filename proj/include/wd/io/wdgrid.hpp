#pragma once

#include <string>
#include <vector>

#include "wd/grid.hpp"

namespace wd::io {

// WDGRID container, bit-exact layout:
//   magic "WDGD" | version u16 LE = 1 | layer_count u16 LE
//   | per layer: layer_id u16, scale u16, H u32, W u32, d u32 (all LE)
//   | payload per layer: H*W*d float32 LE, row-major (row, col, channel).
// Values are stored as float32; doubles are narrowed on write.
void write_stack(const std::string& path, const FeatureStack& stack);
FeatureStack read_stack(const std::string& path);

// Single-layer convenience wrappers (sigma-maps, heatmaps): d = 1, scale 1.
void write_single_grid(const std::string& path, const std::vector<double>& values, int rows, int cols);
std::vector<double> read_single_grid(const std::string& path, int& rows, int& cols);

}  // namespace wd::io
