#include "wd/grid.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "wd/errors.hpp"
#include "wd/numeric.hpp"

namespace wd {

ImageGrid::ImageGrid(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
    if (height <= 0 || width <= 0) throw std::invalid_argument("ImageGrid: dims must be positive");
    if (channels != 1 && channels != 3) throw std::invalid_argument("ImageGrid: channels must be 1 or 3");
    values_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

bool ImageGrid::all_finite() const {
    for (double v : values_)
        if (!std::isfinite(v)) return false;
    return true;
}

ImageGrid ImageGrid::clamped01() const {
    ImageGrid out = *this;
    for (double& v : out.values_) v = std::clamp(v, 0.0, 1.0);
    return out;
}

const FeatureLayer* FeatureStack::find(int layer_id) const {
    for (const auto& l : layers)
        if (l.layer_id == layer_id) return &l;
    return nullptr;
}

bool FeatureStack::layer_compatible(const FeatureStack& other) const {
    if (layers.size() != other.layers.size()) return false;
    for (std::size_t i = 0; i < layers.size(); ++i)
        if (!layers[i].same_shape(other.layers[i])) return false;
    return true;
}

bool FeatureStack::depth_compatible(const FeatureStack& other) const {
    if (layers.size() != other.layers.size()) return false;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& a = layers[i];
        const auto& b = other.layers[i];
        if (a.layer_id != b.layer_id || a.scale != b.scale || a.depth != b.depth) return false;
    }
    return true;
}

double mean_squared_error(const ImageGrid& a, const ImageGrid& b) {
    if (!a.same_shape(b)) throw InputError("mean_squared_error: shape mismatch");
    KahanSum acc;
    const auto& va = a.values();
    const auto& vb = b.values();
    for (std::size_t i = 0; i < va.size(); ++i) {
        const double d = va[i] - vb[i];
        acc.add(d * d);
    }
    return acc.value() / static_cast<double>(va.size());
}

double mean_squared_error_masked(const ImageGrid& a, const ImageGrid& b,
                                 const std::vector<std::uint8_t>& mask) {
    if (!a.same_shape(b)) throw InputError("mean_squared_error_masked: shape mismatch");
    if (mask.size() != static_cast<std::size_t>(a.height()) * a.width())
        throw InputError("mean_squared_error_masked: mask size mismatch");
    KahanSum acc;
    std::size_t count = 0;
    for (int r = 0; r < a.height(); ++r)
        for (int c = 0; c < a.width(); ++c) {
            if (!mask[static_cast<std::size_t>(r) * a.width() + c]) continue;
            for (int ch = 0; ch < a.channels(); ++ch) {
                const double d = a.at(r, c, ch) - b.at(r, c, ch);
                acc.add(d * d);
            }
            count += a.channels();
        }
    if (count == 0) return 0.0;
    return acc.value() / static_cast<double>(count);
}

}  // namespace wd
