#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "wd/grid.hpp"

namespace wd {

// Per-pixel pooling width, >= 0 and finite.
struct SigmaMap {
    int rows = 0, cols = 0;
    std::vector<double> sigma;  // row-major

    double at(int r, int c) const { return sigma[static_cast<std::size_t>(r) * cols + c]; }
    double& at(int r, int c) { return sigma[static_cast<std::size_t>(r) * cols + c]; }
};

// Saliency values clamped to [0,1] at ingestion.
struct SaliencyGrid {
    int rows = 0, cols = 0;
    std::vector<double> value;

    double at(int r, int c) const { return value[static_cast<std::size_t>(r) * cols + c]; }
};

inline constexpr double kUnreachable = std::numeric_limits<double>::infinity();

SigmaMap constant_sigma(int rows, int cols, double sigma);

// Exact Euclidean distance to the nearest true pixel (two-pass parabola
// lower envelope on squared distances). 0 on true pixels; kUnreachable
// everywhere if the mask is all-false.
std::vector<double> distance_transform(const std::vector<std::uint8_t>& mask, int rows, int cols);

// sigma(p) = edge_sigma * dist(p) / max_dist; exactly 0 on pins.
SigmaMap pinned_sigma(int rows, int cols, const std::vector<std::uint8_t>& pins, double edge_sigma);

// Pixels with saliency > threshold get sigma = 0; the rest grow linearly with
// distance to the nearest high-saliency pixel.
SigmaMap saliency_sigma(const SaliencyGrid& saliency, double threshold, double edge_sigma);

// Per-layer units: output(i,j) = map(i*scale, j*scale) / scale at
// ceil(dims/scale) resolution.
SigmaMap rescale_sigma_for_layer(const SigmaMap& map, int scale);

// Grayscale (or channel-averaged) image as saliency, clamped to [0,1].
SaliencyGrid saliency_from_image(const ImageGrid& image);

}  // namespace wd
