#pragma once

#include <string>

#include "wd/grid.hpp"

namespace wd::io {

// Reads an 8-bit PNG as an ImageGrid with values in [0,1]. Grayscale maps to
// 1 channel; RGB/RGBA/palette map to 3 (alpha dropped, 16-bit stripped).
ImageGrid read_png(const std::string& path);

// Writes an 8-bit PNG; values are clamped to [0,1] and scaled to 0..255.
void write_png(const std::string& path, const ImageGrid& image);

}  // namespace wd::io
