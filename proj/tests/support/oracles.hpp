#pragma once

#include <cstdint>
#include <vector>

#include "wd/features.hpp"
#include "wd/grid.hpp"

// Independent oracle implementations used only by tests. They share no code
// with the library paths they check.
namespace oracle {

// Direct nested-loop cross-correlation with symmetric reflection.
wd::FeatureLayer conv_direct(const wd::FeatureLayer& input, const wd::KernelBank& bank);

// All-pairs minimum Euclidean distance (squared min taken over integers,
// sqrt at the end, so exact equality against the two-pass transform holds).
std::vector<double> distance_brute(const std::vector<std::uint8_t>& mask, int rows, int cols);

// Optimal transport cost min sum c_ij x_ij with row sums a and column sums b,
// solved by the transportation simplex (northwest-corner start, potentials,
// cycle pivots). Exact up to numerical tolerance; m, n small.
double transport_lp(const std::vector<double>& cost, const std::vector<double>& a,
                    const std::vector<double>& b);

// 1-D W_p^p via the LP oracle.
double w_p_1d_lp(const std::vector<double>& xs, const std::vector<double>& xw,
                 const std::vector<double>& ys, const std::vector<double>& yw, double p);

// Deterministic procedural textures in [0,1].
wd::ImageGrid stripes_texture(int size, int period, double noise, std::uint64_t seed);
wd::ImageGrid checker_texture(int size, int cell, double noise, std::uint64_t seed);
wd::ImageGrid blob_texture(int size, double freq, std::uint64_t seed);

}  // namespace oracle
