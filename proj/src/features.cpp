#include "wd/features.hpp"

#include <cmath>
#include <stdexcept>

#include "wd/errors.hpp"
#include "wd/rng.hpp"

namespace wd {

KernelBank random_kernel_bank(int out_channels, int in_channels, int kernel_size,
                              Nonlinearity nonlinearity, std::uint64_t seed) {
    if (out_channels <= 0 || in_channels <= 0) throw std::invalid_argument("random_kernel_bank: bad channels");
    if (kernel_size <= 0 || kernel_size % 2 == 0)
        throw std::invalid_argument("random_kernel_bank: kernel size must be odd and positive");
    KernelBank bank;
    bank.out_channels = out_channels;
    bank.in_channels = in_channels;
    bank.kernel_size = kernel_size;
    bank.nonlinearity = nonlinearity;
    bank.seed = seed;
    bank.taps.resize(static_cast<std::size_t>(out_channels) * in_channels * kernel_size * kernel_size);
    const double scale = 1.0 / std::sqrt(static_cast<double>(in_channels) * kernel_size * kernel_size);
    Rng rng(seed);
    for (double& t : bank.taps) t = rng.normal() * scale;
    return bank;
}

FeatureLayer raw_pixel_layer(const ImageGrid& image) {
    if (image.empty()) throw std::invalid_argument("raw_pixel_layer: empty image");
    FeatureLayer layer;
    layer.layer_id = 0;
    layer.scale = 1;
    layer.height = image.height();
    layer.width = image.width();
    layer.depth = image.channels();
    layer.values = image.values();
    return layer;
}

namespace {

// Padded copy, (H+2p) x (W+2p) x d, symmetric reflection.
std::vector<double> pad_reflect(const FeatureLayer& in, int pad) {
    const int ph = in.height + 2 * pad;
    const int pw = in.width + 2 * pad;
    std::vector<double> out(static_cast<std::size_t>(ph) * pw * in.depth);
#pragma omp parallel for schedule(static)
    for (int r = 0; r < ph; ++r) {
        const int sr = mirror_index(r - pad, in.height);
        for (int c = 0; c < pw; ++c) {
            const int sc = mirror_index(c - pad, in.width);
            const double* src = in.vec(sr, sc);
            double* dst = out.data() + (static_cast<std::size_t>(r) * pw + c) * in.depth;
            for (int ch = 0; ch < in.depth; ++ch) dst[ch] = src[ch];
        }
    }
    return out;
}

}  // namespace

ConvForward conv_bank_forward(const FeatureLayer& input, const KernelBank& bank) {
    if (bank.in_channels != input.depth)
        throw InputError("conv_bank_forward: bank input channels do not match layer depth");
    const int h = input.height, w = input.width, k = bank.kernel_size;
    const int pad = k / 2;
    const int pw = w + 2 * pad;
    const std::vector<double> padded = pad_reflect(input, pad);

    ConvForward fwd;
    fwd.output.layer_id = input.layer_id;
    fwd.output.scale = input.scale;
    fwd.output.height = h;
    fwd.output.width = w;
    fwd.output.depth = bank.out_channels;
    fwd.preact.resize(static_cast<std::size_t>(h) * w * bank.out_channels);

#pragma omp parallel for schedule(static)
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            double* out = fwd.preact.data() + (static_cast<std::size_t>(r) * w + c) * bank.out_channels;
            for (int oc = 0; oc < bank.out_channels; ++oc) {
                double acc = 0.0;
                const double* taps = bank.taps.data() +
                                     static_cast<std::size_t>(oc) * bank.in_channels * k * k;
                for (int ic = 0; ic < bank.in_channels; ++ic)
                    for (int a = 0; a < k; ++a) {
                        const double* row =
                            padded.data() + (static_cast<std::size_t>(r + a) * pw + c) * input.depth + ic;
                        const double* trow = taps + (static_cast<std::size_t>(ic) * k + a) * k;
                        for (int b = 0; b < k; ++b) acc += trow[b] * row[static_cast<std::size_t>(b) * input.depth];
                    }
                out[oc] = acc;
            }
        }
    }

    fwd.output.values = fwd.preact;
    if (bank.nonlinearity == Nonlinearity::rectify)
        for (double& v : fwd.output.values)
            if (v < 0.0) v = 0.0;
    return fwd;
}

FeatureLayer conv_bank_apply(const FeatureLayer& input, const KernelBank& bank) {
    return conv_bank_forward(input, bank).output;
}

FeatureLayer conv_bank_apply(const ImageGrid& image, const KernelBank& bank) {
    return conv_bank_apply(raw_pixel_layer(image), bank);
}

void conv_bank_backward(const std::vector<double>& preact, const KernelBank& bank,
                        const std::vector<double>& grad_out, int height, int width,
                        std::vector<double>& grad_in) {
    const int h = height, w = width, k = bank.kernel_size;
    const int pad = k / 2;
    const int in_depth = bank.in_channels;
    if (grad_out.size() != preact.size() ||
        preact.size() != static_cast<std::size_t>(h) * w * bank.out_channels)
        throw std::invalid_argument("conv_bank_backward: grad size mismatch");
    if (grad_in.empty()) grad_in.assign(static_cast<std::size_t>(h) * w * in_depth, 0.0);

    // Rectifier mask (subgradient 0 at 0).
    std::vector<double> g = grad_out;
    if (bank.nonlinearity == Nonlinearity::rectify)
        for (std::size_t i = 0; i < g.size(); ++i)
            if (preact[i] <= 0.0) g[i] = 0.0;

    // Adjoint of the padded correlation: a full correlation over the padded
    // grid, then the pad ring folds back through the same mirror mapping.
    const int ph = h + 2 * pad, pw = w + 2 * pad;
    std::vector<double> gpad(static_cast<std::size_t>(ph) * pw * in_depth, 0.0);
#pragma omp parallel for schedule(static)
    for (int u = 0; u < ph; ++u) {
        for (int v = 0; v < pw; ++v) {
            double* dst = gpad.data() + (static_cast<std::size_t>(u) * pw + v) * in_depth;
            const int alo = std::max(0, u - (h - 1)), ahi = std::min(k - 1, u);
            const int blo = std::max(0, v - (w - 1)), bhi = std::min(k - 1, v);
            for (int a = alo; a <= ahi; ++a)
                for (int b = blo; b <= bhi; ++b) {
                    const double* grow =
                        g.data() + (static_cast<std::size_t>(u - a) * w + (v - b)) * bank.out_channels;
                    for (int ic = 0; ic < in_depth; ++ic) {
                        double acc = 0.0;
                        for (int oc = 0; oc < bank.out_channels; ++oc)
                            acc += bank.tap(oc, ic, a, b) * grow[oc];
                        dst[ic] += acc;
                    }
                }
        }
    }

    // Interior adds are disjoint per row; the fold of the pad ring runs
    // serially so accumulation order is fixed.
#pragma omp parallel for schedule(static)
    for (int r = 0; r < h; ++r) {
        const double* src = gpad.data() + (static_cast<std::size_t>(r + pad) * pw + pad) * in_depth;
        double* dst = grad_in.data() + static_cast<std::size_t>(r) * w * in_depth;
        for (int i = 0; i < w * in_depth; ++i) dst[i] += src[i];
    }
    for (int u = 0; u < ph; ++u) {
        const bool edge_row = (u < pad || u >= h + pad);
        for (int v = 0; v < pw; ++v) {
            if (!edge_row && v >= pad && v < w + pad) continue;
            const int sr = mirror_index(u - pad, h);
            const int sc = mirror_index(v - pad, w);
            const double* src = gpad.data() + (static_cast<std::size_t>(u) * pw + v) * in_depth;
            double* dst = grad_in.data() + (static_cast<std::size_t>(sr) * w + sc) * in_depth;
            for (int ch = 0; ch < in_depth; ++ch) dst[ch] += src[ch];
        }
    }
}

FeatureLayer average_pool_2x2(const FeatureLayer& input) {
    FeatureLayer out;
    out.layer_id = input.layer_id;
    out.scale = input.scale * 2;
    out.height = (input.height + 1) / 2;
    out.width = (input.width + 1) / 2;
    out.depth = input.depth;
    out.values.assign(static_cast<std::size_t>(out.height) * out.width * out.depth, 0.0);
#pragma omp parallel for schedule(static)
    for (int r = 0; r < out.height; ++r) {
        for (int c = 0; c < out.width; ++c) {
            const int r1 = std::min(2 * r + 1, input.height - 1);
            const int c1 = std::min(2 * c + 1, input.width - 1);
            const int nr = r1 - 2 * r + 1, nc = c1 - 2 * c + 1;
            const double inv = 1.0 / (nr * nc);
            double* dst = out.values.data() + (static_cast<std::size_t>(r) * out.width + c) * out.depth;
            for (int rr = 2 * r; rr <= r1; ++rr)
                for (int cc = 2 * c; cc <= c1; ++cc) {
                    const double* src = input.vec(rr, cc);
                    for (int ch = 0; ch < out.depth; ++ch) dst[ch] += src[ch] * inv;
                }
        }
    }
    return out;
}

void average_pool_backward(int in_height, int in_width, int depth,
                           const std::vector<double>& grad_out, int out_height, int out_width,
                           std::vector<double>& grad_in) {
    if (grad_out.size() != static_cast<std::size_t>(out_height) * out_width * depth)
        throw std::invalid_argument("average_pool_backward: grad size mismatch");
    if (grad_in.empty()) grad_in.assign(static_cast<std::size_t>(in_height) * in_width * depth, 0.0);
#pragma omp parallel for schedule(static)
    for (int r = 0; r < in_height; ++r) {
        const int orow = r / 2;
        const int r1 = std::min(2 * orow + 1, in_height - 1);
        for (int c = 0; c < in_width; ++c) {
            const int ocol = c / 2;
            const int c1 = std::min(2 * ocol + 1, in_width - 1);
            const double inv = 1.0 / ((r1 - 2 * orow + 1) * (c1 - 2 * ocol + 1));
            const double* src = grad_out.data() + (static_cast<std::size_t>(orow) * out_width + ocol) * depth;
            double* dst = grad_in.data() + (static_cast<std::size_t>(r) * in_width + c) * depth;
            for (int ch = 0; ch < depth; ++ch) dst[ch] += src[ch] * inv;
        }
    }
}

std::vector<KernelBank> banks_for_spec(const FeatureStackSpec& spec, int image_channels) {
    if (spec.num_layers < 1) throw std::invalid_argument("banks_for_spec: num_layers must be >= 1");
    if (static_cast<int>(spec.widths.size()) != spec.num_layers)
        throw std::invalid_argument("banks_for_spec: widths must have one entry per conv layer");
    std::vector<KernelBank> banks;
    banks.reserve(static_cast<std::size_t>(spec.num_layers));
    int in_ch = image_channels;
    for (int l = 0; l < spec.num_layers; ++l) {
        banks.push_back(random_kernel_bank(spec.widths[static_cast<std::size_t>(l)], in_ch,
                                           spec.kernel_size, Nonlinearity::rectify,
                                           mix_seed(spec.seed, static_cast<std::uint64_t>(l + 1))));
        in_ch = spec.widths[static_cast<std::size_t>(l)];
    }
    return banks;
}

FeatureStack feature_stack_with_banks(const ImageGrid& image, const FeatureStackSpec& spec,
                                      const std::vector<KernelBank>& banks) {
    if (static_cast<int>(banks.size()) != spec.num_layers)
        throw std::invalid_argument("feature_stack_with_banks: bank count mismatch");
    FeatureStack stack;
    stack.layers.push_back(raw_pixel_layer(image));

    FeatureLayer current = stack.layers[0];
    for (int l = 1; l <= spec.num_layers; ++l) {
        if (l >= 2) current = average_pool_2x2(current);
        if (current.height < 1 || current.width < 1)
            throw std::invalid_argument("feature_stack_with_banks: layer would have zero extent");
        current = conv_bank_apply(current, banks[static_cast<std::size_t>(l - 1)]);
        current.layer_id = l;
        stack.layers.push_back(current);
    }
    return stack;
}

FeatureStack random_feature_stack(const ImageGrid& image, const FeatureStackSpec& spec) {
    return feature_stack_with_banks(image, spec, banks_for_spec(spec, image.channels()));
}

}  // namespace wd
