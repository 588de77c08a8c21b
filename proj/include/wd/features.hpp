#pragma once

#include <cstdint>
#include <vector>

#include "wd/grid.hpp"

namespace wd {

enum class Nonlinearity { identity, rectify };

// Centered square convolution bank (d_out x d_in x k x k taps), k odd.
struct KernelBank {
    int out_channels = 0;
    int in_channels = 0;
    int kernel_size = 0;
    Nonlinearity nonlinearity = Nonlinearity::identity;
    std::uint64_t seed = 0;
    std::vector<double> taps;  // [oc][ic][a][b]

    std::size_t tap_index(int oc, int ic, int a, int b) const {
        return ((static_cast<std::size_t>(oc) * in_channels + ic) * kernel_size + a) * kernel_size + b;
    }
    double tap(int oc, int ic, int a, int b) const { return taps[tap_index(oc, ic, a, b)]; }
};

// Zero-mean taps scaled by 1/sqrt(fan_in); identical seed gives identical taps.
KernelBank random_kernel_bank(int out_channels, int in_channels, int kernel_size,
                              Nonlinearity nonlinearity, std::uint64_t seed);

// Symmetric boundary reflection (edge pixel repeated), folding as needed.
inline int mirror_index(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * n;
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - 1 - i;
}

// Layer 0: raw pixel values, scale 1.
FeatureLayer raw_pixel_layer(const ImageGrid& image);

// Retained buffers for the reverse pass. `preact` is the pre-nonlinearity
// response (needed for the rectifier mask).
struct ConvForward {
    FeatureLayer output;
    std::vector<double> preact;
};

ConvForward conv_bank_forward(const FeatureLayer& input, const KernelBank& bank);

// Centered cross-correlation with reflect padding; output dims equal input
// dims. Thin wrapper over conv_bank_forward.
FeatureLayer conv_bank_apply(const FeatureLayer& input, const KernelBank& bank);
FeatureLayer conv_bank_apply(const ImageGrid& image, const KernelBank& bank);

// d(loss)/d(input) from d(loss)/d(output). Applies the rectifier mask from
// the retained preactivations, then the correlation adjoint with reflected
// borders folded back. Spatial dims are shared by input and output. grad_in
// is accumulated into (resized+zeroed if empty).
void conv_bank_backward(const std::vector<double>& preact, const KernelBank& bank,
                        const std::vector<double>& grad_out, int height, int width,
                        std::vector<double>& grad_in);

// 2x2 block averaging; ragged edge blocks average over the cells present.
FeatureLayer average_pool_2x2(const FeatureLayer& input);
void average_pool_backward(int in_height, int in_width, int depth,
                           const std::vector<double>& grad_out, int out_height, int out_width,
                           std::vector<double>& grad_in);

struct FeatureStackSpec {
    int num_layers = 4;
    std::vector<int> widths = {16, 32, 64, 64};  // one entry per conv layer
    int kernel_size = 3;
    std::uint64_t seed = 1;
};

// One bank per conv layer, seeds derived from spec.seed and the layer index.
std::vector<KernelBank> banks_for_spec(const FeatureStackSpec& spec, int image_channels);

// Stack = [layer 0 (raw pixels)] + conv layers with scales 1, 2, 4, ...;
// 2x2 average pooling between conv layers; rectified activations.
FeatureStack feature_stack_with_banks(const ImageGrid& image, const FeatureStackSpec& spec,
                                      const std::vector<KernelBank>& banks);
FeatureStack random_feature_stack(const ImageGrid& image, const FeatureStackSpec& spec);

}  // namespace wd
