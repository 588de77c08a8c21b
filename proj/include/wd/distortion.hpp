#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "wd/grid.hpp"
#include "wd/pooling.hpp"
#include "wd/sigma_map.hpp"

namespace wd {

// Per-location pooled first and second moments of a feature layer.
struct PooledMoments {
    std::vector<double> mean;
    std::vector<double> var;  // clamped at 0
    int center_row = 0, center_col = 0;
    double sigma = 0.0;
};

PooledMoments pooled_moments(const FeatureLayer& layer, const PoolingKernel2D& kernel);

// Pooled mean and full covariance (d x d, row-major).
struct PooledGaussian {
    std::vector<double> mean;
    std::vector<double> cov;
};

PooledGaussian pooled_gaussian(const FeatureLayer& layer, const PoolingKernel2D& kernel);

// Sum_i (mu_i - mu'_i)^2 + (sqrt(V_i) - sqrt(V'_i))^2.
double gaussianized_diag_w2(const PooledMoments& a, const PooledMoments& b);

// ||mu - mu'||^2 + Tr(C + C' - 2 (C'^{1/2} C C'^{1/2})^{1/2}); covariances are
// symmetrized and eigenvalue-clamped at 0 on entry.
double bures_w2(const std::vector<double>& mean_a, const std::vector<double>& cov_a,
                const std::vector<double>& mean_b, const std::vector<double>& cov_b);

// Weighted empirical distribution on the real line.
struct WeightedEmpirical {
    std::vector<double> support;
    std::vector<double> weights;
};

// W_p^p between two scalar weighted empiricals via the merged-quantile
// traversal (optimal for convex costs |x-y|^p, p >= 1).
double exact_w_p_1d(const WeightedEmpirical& a, const WeightedEmpirical& b, double p);

// Monte-Carlo sliced W_p^p: average of exact_w_p_1d over random unit
// directions. points are N x d row-major. Deterministic given seed.
double sliced_w_p(const std::vector<double>& a_points, const std::vector<double>& a_weights,
                  const std::vector<double>& b_points, const std::vector<double>& b_weights, int dim,
                  int num_projections, double p, std::uint64_t seed);

enum class Backend { diag, bures, exact1d, sliced };

Backend backend_from_string(const std::string& name);
std::string backend_to_string(Backend backend);

struct DistortionParams {
    Backend backend = Backend::diag;
    double p = 2.0;  // exact1d / sliced only
    int sliced_projections = 64;
    std::uint64_t sliced_seed = 0;
    double tail_mass_bound = 1e-9;
};

// Pooling distortion at one location of one layer. sigma is in the layer's
// own pixel units. At sigma = 0 with the diag backend the variance term is
// skipped (it is identically zero).
double local_distortion(const FeatureStack& ref, const FeatureStack& rec, int layer_id, int row,
                        int col, double sigma, const DistortionParams& params = {});

// Point of interest with its pooling width (in the owning layer's units).
struct PoiPoint {
    int row = 0, col = 0;
    double sigma = 0.0;
};

struct LayerPlan {
    int layer_id = 0;
    std::vector<PoiPoint> fixed;                       // always evaluated
    std::vector<std::vector<PoiPoint>> rotating_sets;  // one active per evaluation
};

struct PoiPlan {
    std::vector<LayerPlan> layers;
    std::uint64_t pick_seed = 0;

    int num_sets() const;
    // Uniform set index from (pick_seed, counter); 0 when there are no sets.
    int pick_set(std::uint64_t counter) const;
    std::size_t total_points(int active_set) const;
};

// Describes the stack geometry a plan is built against.
struct LayerShape {
    int layer_id = 0;
    int scale = 1;
    int height = 0, width = 0, depth = 0;
};

std::vector<LayerShape> layer_shapes(const FeatureStack& stack);

// Fixed points = all sigma = 0 pixels per layer; n_sets pre-drawn sets of
// n_random distinct nonzero-sigma pixels. Sigma values are captured from the
// map rescaled into each layer's units.
PoiPlan build_poi_plan(const SigmaMap& map, const std::vector<LayerShape>& layers, int n_random,
                       int n_sets, std::uint64_t seed);

// Single center point per layer.
PoiPlan center_poi_plan(const SigmaMap& map, const std::vector<LayerShape>& layers);

// Sparse even grid per layer: at most max_per_dim points per dimension, no
// finer than every min_spacing pixels (in the layer's own units).
PoiPlan grid_poi_plan(const SigmaMap& map, const std::vector<LayerShape>& layers,
                      int max_per_dim = 255, int min_spacing = 8);

struct Multipliers {
    std::map<int, double> per_layer;
    double sigma_zero = 1.0;
    double sigma_pos = 200.0;

    double layer(int layer_id) const;
    // Layer 0 gets 100; conv layers get 10 / 5 / 1 by thirds.
    static Multipliers defaults_for(int conv_layers);
};

struct PointContribution {
    int layer_id = 0;
    int row = 0, col = 0;
    double sigma = 0.0;
    double value = 0.0;     // raw local distortion
    double weighted = 0.0;  // value * M_sigma * M_layer
};

struct Heatmap {
    int rows = 0, cols = 0;
    std::vector<double> values;
};

struct DistortionReport {
    double total = 0.0;
    std::map<int, double> per_layer;
    std::vector<PointContribution> per_point;
    std::optional<Heatmap> heatmap;
};

// Sums per-point distortions weighted by the sigma and layer multipliers.
// Point values are computed independently (parallelizable) and reduced in
// plan order, so totals are bit-reproducible.
DistortionReport total_distortion(const FeatureStack& ref, const FeatureStack& rec,
                                  const PoiPlan& plan, const Multipliers& mult,
                                  const DistortionParams& params, int active_set = 0);

// Dense per-pixel distortion at layer-0 resolution, summed over layers with
// multipliers applied. O(N * support * d); stride subsamples (nearest fill).
Heatmap dense_heatmap(const FeatureStack& ref, const FeatureStack& rec, const SigmaMap& map,
                      const Multipliers& mult, const DistortionParams& params, int stride = 1);

}  // namespace wd
