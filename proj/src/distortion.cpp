#include "wd/distortion.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

#include "wd/errors.hpp"
#include "wd/numeric.hpp"
#include "wd/rng.hpp"

namespace wd {

PooledMoments pooled_moments(const FeatureLayer& layer, const PoolingKernel2D& kernel) {
    if (kernel.rows != layer.height || kernel.cols != layer.width)
        throw InputError("pooled_moments: kernel bounds do not match layer dims");
    PooledMoments m;
    m.center_row = kernel.center_row;
    m.center_col = kernel.center_col;
    m.sigma = kernel.sigma;
    m.mean.assign(static_cast<std::size_t>(layer.depth), 0.0);
    m.var.assign(static_cast<std::size_t>(layer.depth), 0.0);

    if (kernel.is_delta()) {
        const double* z = layer.vec(kernel.center_row, kernel.center_col);
        for (int i = 0; i < layer.depth; ++i) m.mean[static_cast<std::size_t>(i)] = z[i];
        return m;  // var identically 0
    }

    std::vector<double> sq(static_cast<std::size_t>(layer.depth), 0.0);
    for (int dr = kernel.dr_lo; dr <= kernel.dr_hi; ++dr) {
        const double wr = kernel.row_weight(dr);
        const int r = kernel.center_row + dr;
        for (int dc = kernel.dc_lo; dc <= kernel.dc_hi; ++dc) {
            const double w = wr * kernel.col_weight(dc);
            const double* z = layer.vec(r, kernel.center_col + dc);
            for (int i = 0; i < layer.depth; ++i) {
                m.mean[static_cast<std::size_t>(i)] += w * z[i];
                sq[static_cast<std::size_t>(i)] += w * z[i] * z[i];
            }
        }
    }
    for (int i = 0; i < layer.depth; ++i) {
        const double v = sq[static_cast<std::size_t>(i)] -
                         m.mean[static_cast<std::size_t>(i)] * m.mean[static_cast<std::size_t>(i)];
        m.var[static_cast<std::size_t>(i)] = v > 0.0 ? v : 0.0;
    }
    return m;
}

PooledGaussian pooled_gaussian(const FeatureLayer& layer, const PoolingKernel2D& kernel) {
    if (kernel.rows != layer.height || kernel.cols != layer.width)
        throw InputError("pooled_gaussian: kernel bounds do not match layer dims");
    const int d = layer.depth;
    PooledGaussian g;
    g.mean.assign(static_cast<std::size_t>(d), 0.0);
    g.cov.assign(static_cast<std::size_t>(d) * d, 0.0);

    for (int dr = kernel.dr_lo; dr <= kernel.dr_hi; ++dr) {
        const double wr = kernel.row_weight(dr);
        const int r = kernel.center_row + dr;
        for (int dc = kernel.dc_lo; dc <= kernel.dc_hi; ++dc) {
            const double w = wr * kernel.col_weight(dc);
            const double* z = layer.vec(r, kernel.center_col + dc);
            for (int i = 0; i < d; ++i) {
                g.mean[static_cast<std::size_t>(i)] += w * z[i];
                const double wzi = w * z[i];
                for (int j = i; j < d; ++j) g.cov[static_cast<std::size_t>(i) * d + j] += wzi * z[j];
            }
        }
    }
    for (int i = 0; i < d; ++i)
        for (int j = i; j < d; ++j) {
            const double c = g.cov[static_cast<std::size_t>(i) * d + j] -
                             g.mean[static_cast<std::size_t>(i)] * g.mean[static_cast<std::size_t>(j)];
            g.cov[static_cast<std::size_t>(i) * d + j] = c;
            g.cov[static_cast<std::size_t>(j) * d + i] = c;
        }
    return g;
}

double gaussianized_diag_w2(const PooledMoments& a, const PooledMoments& b) {
    if (a.mean.size() != b.mean.size()) throw InputError("gaussianized_diag_w2: dimension mismatch");
    KahanSum acc;
    for (std::size_t i = 0; i < a.mean.size(); ++i) {
        const double dm = a.mean[i] - b.mean[i];
        const double ds = std::sqrt(a.var[i]) - std::sqrt(b.var[i]);
        acc.add(dm * dm + ds * ds);
    }
    return acc.value();
}

double bures_w2(const std::vector<double>& mean_a, const std::vector<double>& cov_a,
                const std::vector<double>& mean_b, const std::vector<double>& cov_b) {
    const int d = static_cast<int>(mean_a.size());
    if (mean_b.size() != mean_a.size() || cov_a.size() != static_cast<std::size_t>(d) * d ||
        cov_b.size() != cov_a.size())
        throw InputError("bures_w2: dimension mismatch");

    using Mat = Eigen::MatrixXd;
    Mat A = Eigen::Map<const Mat>(cov_a.data(), d, d);
    Mat B = Eigen::Map<const Mat>(cov_b.data(), d, d);
    A = ((A + A.transpose()) * 0.5).eval();
    B = ((B + B.transpose()) * 0.5).eval();

    Eigen::SelfAdjointEigenSolver<Mat> esB(B);
    if (esB.info() != Eigen::Success) throw std::runtime_error("bures_w2: eigendecomposition failed");
    Eigen::VectorXd lam = esB.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const Mat sqrtB = esB.eigenvectors() * lam.asDiagonal() * esB.eigenvectors().transpose();

    Mat M = sqrtB * A * sqrtB;
    M = ((M + M.transpose()) * 0.5).eval();
    Eigen::SelfAdjointEigenSolver<Mat> esM(M);
    if (esM.info() != Eigen::Success) throw std::runtime_error("bures_w2: eigendecomposition failed");
    const double tr_cross = esM.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

    double mean_term = 0.0;
    for (int i = 0; i < d; ++i) {
        const double dm = mean_a[static_cast<std::size_t>(i)] - mean_b[static_cast<std::size_t>(i)];
        mean_term += dm * dm;
    }
    const double value = mean_term + A.trace() + B.trace() - 2.0 * tr_cross;
    return value > 0.0 ? value : 0.0;
}

namespace {

double pow_cost(double diff, double p) {
    const double a = std::abs(diff);
    if (p == 2.0) return a * a;
    if (p == 1.0) return a;
    return std::pow(a, p);
}

void check_weights(const WeightedEmpirical& e, const char* who) {
    if (e.support.size() != e.weights.size())
        throw std::invalid_argument(std::string(who) + ": support/weights size mismatch");
    if (e.support.empty()) throw std::invalid_argument(std::string(who) + ": empty distribution");
    const double total = kahan_sum(e.weights);
    if (std::abs(total - 1.0) > 1e-9)
        throw std::invalid_argument(std::string(who) + ": weights do not sum to 1");
    for (double w : e.weights)
        if (w < 0.0) throw std::invalid_argument(std::string(who) + ": negative weight");
}

}  // namespace

double exact_w_p_1d(const WeightedEmpirical& a, const WeightedEmpirical& b, double p) {
    if (!(p >= 1.0)) throw std::invalid_argument("exact_w_p_1d: p must be >= 1");
    check_weights(a, "exact_w_p_1d(a)");
    check_weights(b, "exact_w_p_1d(b)");

    std::vector<std::size_t> ia(a.support.size()), ib(b.support.size());
    std::iota(ia.begin(), ia.end(), 0);
    std::iota(ib.begin(), ib.end(), 0);
    std::sort(ia.begin(), ia.end(), [&](std::size_t x, std::size_t y) { return a.support[x] < a.support[y]; });
    std::sort(ib.begin(), ib.end(), [&](std::size_t x, std::size_t y) { return b.support[x] < b.support[y]; });

    KahanSum cost;
    std::size_t i = 0, j = 0;
    double wa = a.weights[ia[0]], wb = b.weights[ib[0]];
    while (i < ia.size() && j < ib.size()) {
        const double step = std::min(wa, wb);
        if (step > 0.0) cost.add(step * pow_cost(a.support[ia[i]] - b.support[ib[j]], p));
        wa -= step;
        wb -= step;
        if (wa <= 0.0) {
            ++i;
            if (i < ia.size()) wa = a.weights[ia[i]];
        }
        if (wb <= 0.0) {
            ++j;
            if (j < ib.size()) wb = b.weights[ib[j]];
        }
    }
    return cost.value();
}

double sliced_w_p(const std::vector<double>& a_points, const std::vector<double>& a_weights,
                  const std::vector<double>& b_points, const std::vector<double>& b_weights, int dim,
                  int num_projections, double p, std::uint64_t seed) {
    if (dim <= 0) throw std::invalid_argument("sliced_w_p: dim must be positive");
    if (num_projections < 1) throw std::invalid_argument("sliced_w_p: need at least one projection");
    const std::size_t na = a_weights.size(), nb = b_weights.size();
    if (a_points.size() != na * static_cast<std::size_t>(dim) ||
        b_points.size() != nb * static_cast<std::size_t>(dim))
        throw InputError("sliced_w_p: dimension mismatch");

    // Directions are drawn serially so the stream does not depend on thread
    // count; per-projection values are reduced in index order.
    std::vector<std::vector<double>> dirs(static_cast<std::size_t>(num_projections));
    Rng rng(seed);
    for (auto& u : dirs) {
        u.resize(static_cast<std::size_t>(dim));
        double norm2 = 0.0;
        do {
            norm2 = 0.0;
            for (double& x : u) {
                x = rng.normal();
                norm2 += x * x;
            }
        } while (norm2 == 0.0);
        const double inv = 1.0 / std::sqrt(norm2);
        for (double& x : u) x *= inv;
    }

    std::vector<double> per_proj(static_cast<std::size_t>(num_projections), 0.0);
#pragma omp parallel for schedule(static)
    for (int t = 0; t < num_projections; ++t) {
        const auto& u = dirs[static_cast<std::size_t>(t)];
        WeightedEmpirical pa, pb;
        pa.weights = a_weights;
        pb.weights = b_weights;
        pa.support.resize(na);
        pb.support.resize(nb);
        for (std::size_t i = 0; i < na; ++i) {
            double s = 0.0;
            for (int k = 0; k < dim; ++k) s += u[static_cast<std::size_t>(k)] * a_points[i * dim + k];
            pa.support[i] = s;
        }
        for (std::size_t i = 0; i < nb; ++i) {
            double s = 0.0;
            for (int k = 0; k < dim; ++k) s += u[static_cast<std::size_t>(k)] * b_points[i * dim + k];
            pb.support[i] = s;
        }
        per_proj[static_cast<std::size_t>(t)] = exact_w_p_1d(pa, pb, p);
    }
    return kahan_sum(per_proj) / static_cast<double>(num_projections);
}

Backend backend_from_string(const std::string& name) {
    if (name == "diag") return Backend::diag;
    if (name == "bures") return Backend::bures;
    if (name == "exact1d") return Backend::exact1d;
    if (name == "sliced") return Backend::sliced;
    throw InputError("unknown backend: " + name);
}

std::string backend_to_string(Backend backend) {
    switch (backend) {
        case Backend::diag: return "diag";
        case Backend::bures: return "bures";
        case Backend::exact1d: return "exact1d";
        case Backend::sliced: return "sliced";
    }
    return "?";
}

namespace {

// Kernel support flattened into a weighted point cloud.
void kernel_cloud(const FeatureLayer& layer, const PoolingKernel2D& kernel,
                  std::vector<double>& points, std::vector<double>& weights) {
    points.clear();
    weights.clear();
    points.reserve(kernel.support_size() * static_cast<std::size_t>(layer.depth));
    weights.reserve(kernel.support_size());
    for (int dr = kernel.dr_lo; dr <= kernel.dr_hi; ++dr) {
        const double wr = kernel.row_weight(dr);
        for (int dc = kernel.dc_lo; dc <= kernel.dc_hi; ++dc) {
            weights.push_back(wr * kernel.col_weight(dc));
            const double* z = layer.vec(kernel.center_row + dr, kernel.center_col + dc);
            points.insert(points.end(), z, z + layer.depth);
        }
    }
}

double backend_distortion(const FeatureLayer& rl, const FeatureLayer& cl,
                          const PoolingKernel2D& kernel, const DistortionParams& params) {
    switch (params.backend) {
        case Backend::diag: {
            if (kernel.is_delta()) {
                // Pure fidelity point: variance is identically zero, skip it.
                const double* a = rl.vec(kernel.center_row, kernel.center_col);
                const double* b = cl.vec(kernel.center_row, kernel.center_col);
                KahanSum acc;
                for (int i = 0; i < rl.depth; ++i) {
                    const double d = a[i] - b[i];
                    acc.add(d * d);
                }
                return acc.value();
            }
            return gaussianized_diag_w2(pooled_moments(rl, kernel), pooled_moments(cl, kernel));
        }
        case Backend::bures: {
            const PooledGaussian a = pooled_gaussian(rl, kernel);
            const PooledGaussian b = pooled_gaussian(cl, kernel);
            return bures_w2(a.mean, a.cov, b.mean, b.cov);
        }
        case Backend::exact1d: {
            if (rl.depth != 1) throw InputError("exact1d backend requires depth-1 features");
            WeightedEmpirical a, b;
            std::vector<double> pts;
            kernel_cloud(rl, kernel, a.support, a.weights);
            kernel_cloud(cl, kernel, b.support, b.weights);
            return exact_w_p_1d(a, b, params.p);
        }
        case Backend::sliced: {
            std::vector<double> pa, wa, pb, wb;
            kernel_cloud(rl, kernel, pa, wa);
            kernel_cloud(cl, kernel, pb, wb);
            return sliced_w_p(pa, wa, pb, wb, rl.depth, params.sliced_projections, params.p,
                              params.sliced_seed);
        }
    }
    throw std::invalid_argument("unknown backend");
}

const FeatureLayer& layer_or_throw(const FeatureStack& s, int layer_id, const char* who) {
    const FeatureLayer* l = s.find(layer_id);
    if (!l) throw InputError(std::string(who) + ": no such layer");
    return *l;
}

// Read-only PMF cache keyed by the sigma bit pattern; populated serially
// before any parallel use.
struct PmfCache {
    std::unordered_map<std::uint64_t, PoolingPmf1D> by_sigma;
    double tail_mass_bound = 1e-9;

    static std::uint64_t key(double sigma) {
        std::uint64_t k;
        static_assert(sizeof(k) == sizeof(sigma));
        std::memcpy(&k, &sigma, sizeof(k));
        return k;
    }
    void ensure(double sigma) {
        const std::uint64_t k = key(sigma);
        if (!by_sigma.count(k)) by_sigma.emplace(k, make_tsg_pmf(sigma, tail_mass_bound));
    }
    const PoolingPmf1D& get(double sigma) const { return by_sigma.at(key(sigma)); }
};

}  // namespace

double local_distortion(const FeatureStack& ref, const FeatureStack& rec, int layer_id, int row,
                        int col, double sigma, const DistortionParams& params) {
    const FeatureLayer& rl = layer_or_throw(ref, layer_id, "local_distortion(ref)");
    const FeatureLayer& cl = layer_or_throw(rec, layer_id, "local_distortion(rec)");
    if (!rl.same_shape(cl)) throw InputError("local_distortion: incompatible stacks");
    if (row < 0 || row >= rl.height || col < 0 || col >= rl.width)
        throw InputError("local_distortion: point outside layer bounds");
    const PoolingPmf1D pmf = make_tsg_pmf(sigma, params.tail_mass_bound);
    const PoolingKernel2D kernel = product_kernel_2d(pmf, row, col, rl.height, rl.width);
    return backend_distortion(rl, cl, kernel, params);
}

int PoiPlan::num_sets() const {
    int n = 0;
    for (const auto& l : layers) n = std::max(n, static_cast<int>(l.rotating_sets.size()));
    return n;
}

int PoiPlan::pick_set(std::uint64_t counter) const {
    const int n = num_sets();
    if (n <= 1) return 0;
    return static_cast<int>(splitmix64(pick_seed ^ splitmix64(counter)) % static_cast<std::uint64_t>(n));
}

std::size_t PoiPlan::total_points(int active_set) const {
    std::size_t n = 0;
    for (const auto& l : layers) {
        n += l.fixed.size();
        if (active_set >= 0 && active_set < static_cast<int>(l.rotating_sets.size()))
            n += l.rotating_sets[static_cast<std::size_t>(active_set)].size();
    }
    return n;
}

std::vector<LayerShape> layer_shapes(const FeatureStack& stack) {
    std::vector<LayerShape> shapes;
    shapes.reserve(stack.layers.size());
    for (const auto& l : stack.layers)
        shapes.push_back({l.layer_id, l.scale, l.height, l.width, l.depth});
    return shapes;
}

namespace {

SigmaMap map_for_layer(const SigmaMap& map, const LayerShape& shape, const char* who) {
    SigmaMap scaled = rescale_sigma_for_layer(map, shape.scale);
    if (scaled.rows != shape.height || scaled.cols != shape.width)
        throw InputError(std::string(who) + ": sigma-map dims do not match layer dims");
    return scaled;
}

}  // namespace

PoiPlan build_poi_plan(const SigmaMap& map, const std::vector<LayerShape>& layers, int n_random,
                       int n_sets, std::uint64_t seed) {
    if (n_random < 0) throw std::invalid_argument("build_poi_plan: n_random must be >= 0");
    if (n_sets < 1) throw std::invalid_argument("build_poi_plan: n_sets must be >= 1");
    PoiPlan plan;
    plan.pick_seed = mix_seed(seed, 0xb0);
    Rng rng(mix_seed(seed, 0xa0));

    for (const auto& shape : layers) {
        const SigmaMap scaled = map_for_layer(map, shape, "build_poi_plan");
        LayerPlan lp;
        lp.layer_id = shape.layer_id;
        std::vector<std::pair<int, int>> pool;
        for (int r = 0; r < scaled.rows; ++r)
            for (int c = 0; c < scaled.cols; ++c) {
                if (scaled.at(r, c) == 0.0)
                    lp.fixed.push_back({r, c, 0.0});
                else
                    pool.emplace_back(r, c);
            }
        if (pool.empty() || n_random == 0) {
            lp.rotating_sets.assign(static_cast<std::size_t>(n_sets), {});
        } else {
            if (static_cast<std::size_t>(n_random) > pool.size())
                throw std::invalid_argument("build_poi_plan: n_random exceeds available nonzero-sigma pixels");
            lp.rotating_sets.reserve(static_cast<std::size_t>(n_sets));
            std::vector<std::pair<int, int>> deck = pool;
            for (int s = 0; s < n_sets; ++s) {
                // Partial Fisher-Yates: distinct within a set.
                for (int i = 0; i < n_random; ++i) {
                    const int j = i + rng.uniform_int(static_cast<int>(deck.size()) - i);
                    std::swap(deck[static_cast<std::size_t>(i)], deck[static_cast<std::size_t>(j)]);
                }
                std::vector<PoiPoint> set;
                set.reserve(static_cast<std::size_t>(n_random));
                for (int i = 0; i < n_random; ++i) {
                    const auto [r, c] = deck[static_cast<std::size_t>(i)];
                    set.push_back({r, c, scaled.at(r, c)});
                }
                lp.rotating_sets.push_back(std::move(set));
            }
        }
        plan.layers.push_back(std::move(lp));
    }
    return plan;
}

PoiPlan center_poi_plan(const SigmaMap& map, const std::vector<LayerShape>& layers) {
    PoiPlan plan;
    for (const auto& shape : layers) {
        const SigmaMap scaled = map_for_layer(map, shape, "center_poi_plan");
        LayerPlan lp;
        lp.layer_id = shape.layer_id;
        const int r = shape.height / 2, c = shape.width / 2;
        lp.fixed.push_back({r, c, scaled.at(r, c)});
        plan.layers.push_back(std::move(lp));
    }
    return plan;
}

PoiPlan grid_poi_plan(const SigmaMap& map, const std::vector<LayerShape>& layers, int max_per_dim,
                      int min_spacing) {
    if (max_per_dim < 1 || min_spacing < 1) throw std::invalid_argument("grid_poi_plan: bad grid rule");
    PoiPlan plan;
    for (const auto& shape : layers) {
        const SigmaMap scaled = map_for_layer(map, shape, "grid_poi_plan");
        LayerPlan lp;
        lp.layer_id = shape.layer_id;
        const auto spacing = [&](int dim) {
            return std::max(min_spacing, (dim + max_per_dim - 1) / max_per_dim);
        };
        const int sr = spacing(shape.height), sc = spacing(shape.width);
        for (int r = sr / 2; r < shape.height; r += sr)
            for (int c = sc / 2; c < shape.width; c += sc) lp.fixed.push_back({r, c, scaled.at(r, c)});
        if (lp.fixed.empty()) lp.fixed.push_back({shape.height / 2, shape.width / 2,
                                                  scaled.at(shape.height / 2, shape.width / 2)});
        plan.layers.push_back(std::move(lp));
    }
    return plan;
}

double Multipliers::layer(int layer_id) const {
    const auto it = per_layer.find(layer_id);
    return it == per_layer.end() ? 1.0 : it->second;
}

Multipliers Multipliers::defaults_for(int conv_layers) {
    Multipliers m;
    m.per_layer[0] = 100.0;
    for (int idx = 0; idx < conv_layers; ++idx) {
        const int third = conv_layers > 0 ? idx * 3 / conv_layers : 0;
        const double value = third == 0 ? 10.0 : (third == 1 ? 5.0 : 1.0);
        m.per_layer[idx + 1] = value;
    }
    return m;
}

DistortionReport total_distortion(const FeatureStack& ref, const FeatureStack& rec,
                                  const PoiPlan& plan, const Multipliers& mult,
                                  const DistortionParams& params, int active_set) {
    if (!ref.layer_compatible(rec)) throw InputError("total_distortion: incompatible stacks");

    struct Item {
        const FeatureLayer* rl;
        const FeatureLayer* cl;
        PoiPoint point;
        int layer_id;
        double m_layer;
    };
    std::vector<Item> items;
    for (const auto& lp : plan.layers) {
        const FeatureLayer& rl = layer_or_throw(ref, lp.layer_id, "total_distortion");
        const FeatureLayer& cl = layer_or_throw(rec, lp.layer_id, "total_distortion");
        const double ml = mult.layer(lp.layer_id);
        auto add = [&](const PoiPoint& p) {
            if (p.row < 0 || p.row >= rl.height || p.col < 0 || p.col >= rl.width)
                throw InputError("total_distortion: plan point outside layer bounds");
            items.push_back({&rl, &cl, p, lp.layer_id, ml});
        };
        for (const auto& p : lp.fixed) add(p);
        if (!lp.rotating_sets.empty()) {
            if (active_set < 0 || active_set >= static_cast<int>(lp.rotating_sets.size()))
                throw std::invalid_argument("total_distortion: active_set out of range");
            for (const auto& p : lp.rotating_sets[static_cast<std::size_t>(active_set)]) add(p);
        }
    }
    if (items.empty()) throw std::invalid_argument("total_distortion: empty plan");

    // Distinct pooling widths built once, then shared read-only.
    PmfCache cache;
    cache.tail_mass_bound = params.tail_mass_bound;
    for (const auto& it : items) cache.ensure(it.point.sigma);

    std::vector<double> values(items.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(items.size()); ++i) {
        const Item& it = items[static_cast<std::size_t>(i)];
        const PoolingKernel2D kernel = product_kernel_2d(cache.get(it.point.sigma), it.point.row,
                                                         it.point.col, it.rl->height, it.rl->width);
        values[static_cast<std::size_t>(i)] = backend_distortion(*it.rl, *it.cl, kernel, params);
    }

    DistortionReport report;
    KahanSum total;
    std::map<int, KahanSum> per_layer;
    report.per_point.reserve(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
        const Item& it = items[i];
        const double m_sigma = it.point.sigma == 0.0 ? mult.sigma_zero : mult.sigma_pos;
        const double weighted = values[i] * m_sigma * it.m_layer;
        report.per_point.push_back(
            {it.layer_id, it.point.row, it.point.col, it.point.sigma, values[i], weighted});
        total.add(weighted);
        per_layer[it.layer_id].add(weighted);
    }
    report.total = total.value();
    for (const auto& [id, acc] : per_layer) report.per_layer[id] = acc.value();
    return report;
}

Heatmap dense_heatmap(const FeatureStack& ref, const FeatureStack& rec, const SigmaMap& map,
                      const Multipliers& mult, const DistortionParams& params, int stride) {
    if (!ref.layer_compatible(rec)) throw InputError("dense_heatmap: incompatible stacks");
    if (stride < 1) throw std::invalid_argument("dense_heatmap: stride must be >= 1");
    if (ref.layers.empty()) throw InputError("dense_heatmap: empty stack");
    const int rows = ref.layers[0].height, cols = ref.layers[0].width;
    if (map.rows != rows || map.cols != cols) throw InputError("dense_heatmap: sigma-map dims mismatch");

    std::vector<SigmaMap> scaled;
    scaled.reserve(ref.layers.size());
    for (const auto& l : ref.layers) scaled.push_back(rescale_sigma_for_layer(map, l.scale));

    PmfCache cache;
    cache.tail_mass_bound = params.tail_mass_bound;
    for (std::size_t li = 0; li < ref.layers.size(); ++li)
        for (int r = 0; r < scaled[li].rows; r += 1)
            for (int c = 0; c < scaled[li].cols; c += 1) cache.ensure(scaled[li].at(r, c));

    Heatmap heat;
    heat.rows = rows;
    heat.cols = cols;
    heat.values.assign(static_cast<std::size_t>(rows) * cols, 0.0);

#pragma omp parallel for schedule(dynamic, 1)
    for (int r = 0; r < rows; r += stride) {
        for (int c = 0; c < cols; c += stride) {
            double acc = 0.0;
            for (std::size_t li = 0; li < ref.layers.size(); ++li) {
                const FeatureLayer& rl = ref.layers[li];
                const FeatureLayer& cl = rec.layers[li];
                const int lr = std::min(r / rl.scale, rl.height - 1);
                const int lc = std::min(c / rl.scale, rl.width - 1);
                const double sigma = scaled[li].at(lr, lc);
                const PoolingKernel2D kernel =
                    product_kernel_2d(cache.get(sigma), lr, lc, rl.height, rl.width);
                const double v = backend_distortion(rl, cl, kernel, params);
                const double m_sigma = sigma == 0.0 ? mult.sigma_zero : mult.sigma_pos;
                acc += v * m_sigma * mult.layer(rl.layer_id);
            }
            heat.values[static_cast<std::size_t>(r) * cols + c] = acc;
        }
    }

    if (stride > 1) {
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) {
                const int sr = (r / stride) * stride, sc = (c / stride) * stride;
                heat.values[static_cast<std::size_t>(r) * cols + c] =
                    heat.values[static_cast<std::size_t>(sr) * cols + sc];
            }
    }
    return heat;
}

}  // namespace wd
