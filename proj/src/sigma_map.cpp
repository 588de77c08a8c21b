#include "wd/sigma_map.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "wd/errors.hpp"

namespace wd {

SigmaMap constant_sigma(int rows, int cols, double sigma) {
    if (rows <= 0 || cols <= 0) throw std::invalid_argument("constant_sigma: empty dims");
    if (!(sigma >= 0.0) || !std::isfinite(sigma))
        throw std::invalid_argument("constant_sigma: sigma must be finite and nonnegative");
    SigmaMap map;
    map.rows = rows;
    map.cols = cols;
    map.sigma.assign(static_cast<std::size_t>(rows) * cols, sigma);
    return map;
}

namespace {

// 1-D squared-distance transform: out[i] = min_j (f[j] + (i-j)^2).
// Lower envelope of parabolas; infinite f entries are skipped.
void edt_1d(const double* f, double* out, int n, int* v, double* z) {
    int k = -1;
    for (int q = 0; q < n; ++q) {
        if (f[q] == kUnreachable) continue;
        double s;
        while (k >= 0) {
            s = ((f[q] + static_cast<double>(q) * q) - (f[v[k]] + static_cast<double>(v[k]) * v[k])) /
                (2.0 * (q - v[k]));
            if (s <= z[k]) {
                --k;
            } else {
                break;
            }
        }
        if (k < 0) {
            k = 0;
            v[0] = q;
            z[0] = -kUnreachable;
            z[1] = kUnreachable;
        } else {
            ++k;
            v[k] = q;
            z[k] = s;
            z[k + 1] = kUnreachable;
        }
    }
    if (k < 0) {
        for (int i = 0; i < n; ++i) out[i] = kUnreachable;
        return;
    }
    int j = 0;
    for (int i = 0; i < n; ++i) {
        while (z[j + 1] < static_cast<double>(i)) ++j;
        const double d = static_cast<double>(i) - v[j];
        out[i] = f[v[j]] + d * d;
    }
}

}  // namespace

std::vector<double> distance_transform(const std::vector<std::uint8_t>& mask, int rows, int cols) {
    if (rows <= 0 || cols <= 0 || mask.size() != static_cast<std::size_t>(rows) * cols)
        throw std::invalid_argument("distance_transform: mask/dims mismatch");

    std::vector<double> sq(static_cast<std::size_t>(rows) * cols);
    for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = mask[i] ? 0.0 : kUnreachable;

    // Column pass.
    std::vector<double> tmp(sq.size());
#pragma omp parallel for schedule(static)
    for (int c = 0; c < cols; ++c) {
        std::vector<double> f(static_cast<std::size_t>(rows)), o(static_cast<std::size_t>(rows));
        std::vector<int> v(static_cast<std::size_t>(rows));
        std::vector<double> z(static_cast<std::size_t>(rows) + 1);
        for (int r = 0; r < rows; ++r) f[static_cast<std::size_t>(r)] = sq[static_cast<std::size_t>(r) * cols + c];
        edt_1d(f.data(), o.data(), rows, v.data(), z.data());
        for (int r = 0; r < rows; ++r) tmp[static_cast<std::size_t>(r) * cols + c] = o[static_cast<std::size_t>(r)];
    }

    // Row pass.
    std::vector<double> out(sq.size());
#pragma omp parallel for schedule(static)
    for (int r = 0; r < rows; ++r) {
        std::vector<int> v(static_cast<std::size_t>(cols));
        std::vector<double> z(static_cast<std::size_t>(cols) + 1);
        edt_1d(tmp.data() + static_cast<std::size_t>(r) * cols, out.data() + static_cast<std::size_t>(r) * cols,
               cols, v.data(), z.data());
    }

    for (double& d : out) d = d == kUnreachable ? kUnreachable : std::sqrt(d);
    return out;
}

SigmaMap pinned_sigma(int rows, int cols, const std::vector<std::uint8_t>& pins, double edge_sigma) {
    if (!(edge_sigma > 0.0)) throw std::invalid_argument("pinned_sigma: edge_sigma must be positive");
    bool any = false;
    for (auto p : pins)
        if (p) {
            any = true;
            break;
        }
    if (!any) throw InputError("pinned_sigma: empty pin set");

    std::vector<double> dist = distance_transform(pins, rows, cols);
    double max_dist = 0.0;
    for (double d : dist) max_dist = std::max(max_dist, d);

    SigmaMap map;
    map.rows = rows;
    map.cols = cols;
    map.sigma.resize(dist.size());
    if (max_dist == 0.0) {
        std::fill(map.sigma.begin(), map.sigma.end(), 0.0);
        return map;
    }
    const double k = edge_sigma / max_dist;
    for (std::size_t i = 0; i < dist.size(); ++i) map.sigma[i] = pins[i] ? 0.0 : k * dist[i];
    return map;
}

SigmaMap saliency_sigma(const SaliencyGrid& saliency, double threshold, double edge_sigma) {
    if (!(threshold > 0.0 && threshold < 1.0))
        throw std::invalid_argument("saliency_sigma: threshold must lie in (0,1)");
    std::vector<std::uint8_t> mask(saliency.value.size());
    bool any = false;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        mask[i] = saliency.value[i] > threshold ? 1 : 0;
        any = any || mask[i];
    }
    if (!any) throw InputError("saliency_sigma: no pixel exceeds the saliency threshold");
    return pinned_sigma(saliency.rows, saliency.cols, mask, edge_sigma);
}

SigmaMap rescale_sigma_for_layer(const SigmaMap& map, int scale) {
    if (scale <= 0) throw std::invalid_argument("rescale_sigma_for_layer: scale must be positive");
    if (scale == 1) return map;
    SigmaMap out;
    out.rows = (map.rows + scale - 1) / scale;
    out.cols = (map.cols + scale - 1) / scale;
    out.sigma.resize(static_cast<std::size_t>(out.rows) * out.cols);
    for (int r = 0; r < out.rows; ++r)
        for (int c = 0; c < out.cols; ++c)
            out.at(r, c) = map.at(r * scale, c * scale) / static_cast<double>(scale);
    return out;
}

SaliencyGrid saliency_from_image(const ImageGrid& image) {
    SaliencyGrid grid;
    grid.rows = image.height();
    grid.cols = image.width();
    grid.value.resize(static_cast<std::size_t>(grid.rows) * grid.cols);
    for (int r = 0; r < grid.rows; ++r)
        for (int c = 0; c < grid.cols; ++c) {
            double v = 0.0;
            for (int ch = 0; ch < image.channels(); ++ch) v += image.at(r, c, ch);
            v /= image.channels();
            grid.value[static_cast<std::size_t>(r) * grid.cols + c] = std::clamp(v, 0.0, 1.0);
        }
    return grid;
}

}  // namespace wd
