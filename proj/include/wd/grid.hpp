#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace wd {

// Dense raster of doubles, row-major (row, col, channel). Values are
// nominally in [0,1] at I/O boundaries and unconstrained during optimization.
class ImageGrid {
public:
    ImageGrid() = default;
    ImageGrid(int height, int width, int channels, double fill = 0.0);

    int height() const { return height_; }
    int width() const { return width_; }
    int channels() const { return channels_; }
    std::size_t size() const { return values_.size(); }
    bool empty() const { return values_.empty(); }

    std::size_t index(int r, int c, int ch) const {
        return (static_cast<std::size_t>(r) * width_ + c) * channels_ + ch;
    }
    double at(int r, int c, int ch) const { return values_[index(r, c, ch)]; }
    double& at(int r, int c, int ch) { return values_[index(r, c, ch)]; }

    const std::vector<double>& values() const { return values_; }
    std::vector<double>& values() { return values_; }

    bool all_finite() const;
    ImageGrid clamped01() const;

    bool same_shape(const ImageGrid& other) const {
        return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
    }

private:
    int height_ = 0;
    int width_ = 0;
    int channels_ = 0;
    std::vector<double> values_;
};

// One level of a feature stack: an H x W grid of depth-d feature vectors,
// downsampled by `scale` relative to layer 0.
struct FeatureLayer {
    int layer_id = 0;
    int scale = 1;
    int height = 0;
    int width = 0;
    int depth = 0;
    std::vector<double> values;  // row-major (row, col, channel)

    std::size_t index(int r, int c, int ch) const {
        return (static_cast<std::size_t>(r) * width + c) * depth + ch;
    }
    double at(int r, int c, int ch) const { return values[index(r, c, ch)]; }
    double& at(int r, int c, int ch) { return values[index(r, c, ch)]; }
    const double* vec(int r, int c) const { return values.data() + index(r, c, 0); }

    bool same_shape(const FeatureLayer& other) const {
        return layer_id == other.layer_id && scale == other.scale && height == other.height &&
               width == other.width && depth == other.depth;
    }
};

struct FeatureStack {
    std::vector<FeatureLayer> layers;

    const FeatureLayer* find(int layer_id) const;
    // Same layer ids, scales, dims and depths.
    bool layer_compatible(const FeatureStack& other) const;
    // Same layer ids, scales and depths; dims may differ.
    bool depth_compatible(const FeatureStack& other) const;
};

double mean_squared_error(const ImageGrid& a, const ImageGrid& b);
// MSE restricted to pixels where mask (H x W, row-major) is nonzero.
double mean_squared_error_masked(const ImageGrid& a, const ImageGrid& b,
                                 const std::vector<std::uint8_t>& mask);

}  // namespace wd
