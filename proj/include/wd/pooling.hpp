#pragma once

#include <cmath>
#include <cstdlib>
#include <functional>
#include <string>
#include <vector>

namespace wd {

// Symmetric unimodal PMF over integer offsets, truncated to |k| <= R and
// renormalized. sigma = 0 is the Kronecker delta.
struct PoolingPmf1D {
    double sigma = 0.0;
    int truncation_radius = 0;
    std::vector<double> weights;  // index k + truncation_radius

    double weight(int k) const {
        return std::abs(k) <= truncation_radius ? weights[static_cast<std::size_t>(k + truncation_radius)]
                                                : 0.0;
    }
};

// Two-sided geometric pooling PMF with width sigma, truncated at the smallest
// radius whose omitted tail mass is below tail_mass_bound, then renormalized.
PoolingPmf1D make_tsg_pmf(double sigma, double tail_mass_bound = 1e-9);

// 2-D pooling kernel at a fixed center, clipped to the image bounds and
// renormalized. Clipping a product kernel to a rectangle keeps it separable,
// so it is stored as two renormalized 1-D weight vectors.
struct PoolingKernel2D {
    double sigma = 0.0;
    int center_row = 0, center_col = 0;
    int rows = 0, cols = 0;                  // bounds (H, W)
    int dr_lo = 0, dr_hi = 0;                // inclusive offset ranges
    int dc_lo = 0, dc_hi = 0;
    std::vector<double> row_weights;         // sums to 1
    std::vector<double> col_weights;         // sums to 1

    double row_weight(int dr) const { return row_weights[static_cast<std::size_t>(dr - dr_lo)]; }
    double col_weight(int dc) const { return col_weights[static_cast<std::size_t>(dc - dc_lo)]; }
    double weight(int dr, int dc) const {
        if (dr < dr_lo || dr > dr_hi || dc < dc_lo || dc > dc_hi) return 0.0;
        return row_weight(dr) * col_weight(dc);
    }
    std::size_t support_size() const {
        return static_cast<std::size_t>(dr_hi - dr_lo + 1) * static_cast<std::size_t>(dc_hi - dc_lo + 1);
    }
    bool is_delta() const { return dr_lo == 0 && dr_hi == 0 && dc_lo == 0 && dc_hi == 0; }
};

PoolingKernel2D product_kernel_2d(const PoolingPmf1D& pmf, int center_row, int center_col,
                                  int rows, int cols);

// Direct construction from explicit 1-D weights (tests, custom kernels).
// Weights are renormalized; offsets are relative to center.
PoolingKernel2D kernel_from_weights(double sigma, int center_row, int center_col, int rows, int cols,
                                    int dr_lo, std::vector<double> row_weights,
                                    int dc_lo, std::vector<double> col_weights);

struct AxiomCheck {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct AxiomReport {
    std::vector<AxiomCheck> checks;
    std::string note;  // grid-sampled caveat for the tail-growth check
    bool all_pass() const {
        for (const auto& c : checks)
            if (!c.pass) return false;
        return true;
    }
    std::string to_string() const;
};

using PmfBuilder = std::function<PoolingPmf1D(double sigma)>;

// Evaluates the pooling-family properties on a sigma grid (ascending, must
// include 0): symmetry, unimodality in |k|, delta at sigma=0, continuity at
// sigma=0, tail growth on the small-sigma window, and pointwise vanishing at
// the largest sigma. Violations are reported, not thrown.
AxiomReport check_pmf_axioms(const std::vector<double>& sigmas, const PmfBuilder& builder,
                             int max_offset = 100000);

}  // namespace wd
