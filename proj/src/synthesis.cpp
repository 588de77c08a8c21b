#include "wd/synthesis.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "wd/errors.hpp"
#include "wd/numeric.hpp"
#include "wd/rng.hpp"

namespace wd {

namespace {

constexpr double kVarFloor = 1e-12;

// Forward pass with the buffers the reverse pass needs.
struct StackForward {
    FeatureStack stack;
    std::vector<std::vector<double>> preacts;       // per conv layer
    std::vector<std::pair<int, int>> conv_in_dims;  // spatial dims fed to each conv
};

StackForward forward_stack(const ImageGrid& pixels, const FeatureStackSpec& spec,
                           const std::vector<KernelBank>& banks) {
    StackForward fwd;
    fwd.stack.layers.push_back(raw_pixel_layer(pixels));
    FeatureLayer current = fwd.stack.layers[0];
    for (int l = 1; l <= spec.num_layers; ++l) {
        if (l >= 2) current = average_pool_2x2(current);
        fwd.conv_in_dims.emplace_back(current.height, current.width);
        ConvForward cf = conv_bank_forward(current, banks[static_cast<std::size_t>(l - 1)]);
        cf.output.layer_id = l;
        fwd.preacts.push_back(std::move(cf.preact));
        current = std::move(cf.output);
        fwd.stack.layers.push_back(current);
    }
    return fwd;
}

// Reverse pass: layer_grads[l] = dL/d(stack layer l values); returns dL/dpixels.
std::vector<double> backward_stack(const StackForward& fwd, const FeatureStackSpec& spec,
                                   const std::vector<KernelBank>& banks,
                                   std::vector<std::vector<double>>& layer_grads) {
    for (int l = spec.num_layers; l >= 1; --l) {
        const auto [in_h, in_w] = fwd.conv_in_dims[static_cast<std::size_t>(l - 1)];
        std::vector<double> g_conv_in;
        conv_bank_backward(fwd.preacts[static_cast<std::size_t>(l - 1)],
                           banks[static_cast<std::size_t>(l - 1)],
                           layer_grads[static_cast<std::size_t>(l)], in_h, in_w, g_conv_in);
        if (l >= 2) {
            const FeatureLayer& prev = fwd.stack.layers[static_cast<std::size_t>(l - 1)];
            average_pool_backward(prev.height, prev.width, prev.depth, g_conv_in, in_h, in_w,
                                  layer_grads[static_cast<std::size_t>(l - 1)]);
        } else {
            auto& g0 = layer_grads[0];
            for (std::size_t i = 0; i < g0.size(); ++i) g0[i] += g_conv_in[i];
        }
    }
    return std::move(layer_grads[0]);
}

}  // namespace

SynthesisObjective::PointData SynthesisObjective::make_point(const FeatureLayer& ref_layer,
                                                             const PoiPoint& p, double m_layer) const {
    PointData data;
    data.delta = p.sigma == 0.0;
    data.weight = (data.delta ? mult_.sigma_zero : mult_.sigma_pos) * m_layer;
    const PoolingPmf1D pmf = make_tsg_pmf(p.sigma, cfg_.tail_mass_bound);
    data.kernel = product_kernel_2d(pmf, p.row, p.col, ref_layer.height, ref_layer.width);
    const PooledMoments m = pooled_moments(ref_layer, data.kernel);
    data.ref_mean = m.mean;
    data.ref_sqrt_var.resize(m.var.size());
    for (std::size_t i = 0; i < m.var.size(); ++i) data.ref_sqrt_var[i] = std::sqrt(m.var[i]);
    return data;
}

SynthesisObjective::SynthesisObjective(const ImageGrid& reference, const SigmaMap& map,
                                       const SynthesisConfig& cfg)
    : reference_(reference), cfg_(cfg) {
    if (cfg.backend != Backend::diag)
        throw std::invalid_argument("SynthesisObjective: gradients are implemented for the diag backend");
    if (map.rows != reference.height() || map.cols != reference.width())
        throw InputError("SynthesisObjective: sigma-map dims do not match reference");

    banks_ = banks_for_spec(cfg.features, reference.channels());
    const FeatureStack ref_stack = feature_stack_with_banks(reference, cfg.features, banks_);
    const std::vector<LayerShape> shapes = layer_shapes(ref_stack);

    switch (cfg.poi_mode) {
        case PoiMode::automatic:
            plan_ = build_poi_plan(map, shapes, cfg.poi_random, cfg.poi_sets, cfg.poi_seed);
            break;
        case PoiMode::center:
            plan_ = center_poi_plan(map, shapes);
            break;
        case PoiMode::grid:
            plan_ = grid_poi_plan(map, shapes);
            break;
    }
    plan_.pick_seed = cfg.rotate_seed;

    mult_ = cfg.use_default_multipliers ? Multipliers::defaults_for(cfg.features.num_layers)
                                        : cfg.multipliers;

    for (const auto& lp : plan_.layers) {
        const FeatureLayer* rl = ref_stack.find(lp.layer_id);
        if (!rl) throw std::logic_error("SynthesisObjective: plan layer missing from stack");
        LayerData data;
        data.layer_id = lp.layer_id;
        const double ml = mult_.layer(lp.layer_id);
        data.fixed.reserve(lp.fixed.size());
        for (const auto& p : lp.fixed) data.fixed.push_back(make_point(*rl, p, ml));
        data.rotating.reserve(lp.rotating_sets.size());
        for (const auto& set : lp.rotating_sets) {
            std::vector<PointData> points;
            points.reserve(set.size());
            for (const auto& p : set) points.push_back(make_point(*rl, p, ml));
            data.rotating.push_back(std::move(points));
        }
        layers_.push_back(std::move(data));
    }
}

void SynthesisObjective::set_active_set(int set_index) {
    if (set_index < 0 || (num_sets() > 0 && set_index >= num_sets()))
        throw std::invalid_argument("SynthesisObjective: active set out of range");
    active_set_ = set_index;
}

double SynthesisObjective::evaluate(const std::vector<double>& pixels, std::vector<double>* grad) const {
    if (pixels.size() != reference_.size())
        throw InputError("SynthesisObjective: pixel vector size mismatch");

    ImageGrid candidate(reference_.height(), reference_.width(), reference_.channels());
    candidate.values() = pixels;
    const StackForward fwd = forward_stack(candidate, cfg_.features, banks_);

    std::vector<std::vector<double>> layer_grads;
    if (grad) {
        layer_grads.resize(fwd.stack.layers.size());
        for (std::size_t li = 0; li < fwd.stack.layers.size(); ++li)
            layer_grads[li].assign(fwd.stack.layers[li].values.size(), 0.0);
    }

    KahanSum loss;
    for (std::size_t li = 0; li < layers_.size(); ++li) {
        const LayerData& ld = layers_[li];
        const FeatureLayer& cl = *fwd.stack.find(ld.layer_id);
        const int d = cl.depth;

        std::vector<const PointData*> active;
        active.reserve(ld.fixed.size() + 32);
        for (const auto& p : ld.fixed) active.push_back(&p);
        if (!ld.rotating.empty()) {
            const auto& set = ld.rotating[static_cast<std::size_t>(
                std::min(active_set_, static_cast<int>(ld.rotating.size()) - 1))];
            for (const auto& p : set) active.push_back(&p);
        }
        if (active.empty()) continue;

        // Per-point values; pooled points also stash the gather coefficients
        // A_i + B_i * z_i used by the gradient pass.
        std::vector<double> values(active.size(), 0.0);
        std::vector<std::size_t> pooled_idx;
        for (std::size_t pi = 0; pi < active.size(); ++pi)
            if (!active[pi]->delta) pooled_idx.push_back(pi);

        std::vector<std::vector<double>> coef_a, coef_b;
        if (grad) {
            coef_a.assign(active.size(), {});
            coef_b.assign(active.size(), {});
        }

#pragma omp parallel for schedule(dynamic, 4)
        for (std::ptrdiff_t pi = 0; pi < static_cast<std::ptrdiff_t>(active.size()); ++pi) {
            const PointData& pt = *active[static_cast<std::size_t>(pi)];
            if (pt.delta) {
                const double* z = cl.vec(pt.kernel.center_row, pt.kernel.center_col);
                double v = 0.0;
                for (int i = 0; i < d; ++i) {
                    const double dm = z[i] - pt.ref_mean[static_cast<std::size_t>(i)];
                    v += dm * dm;
                }
                values[static_cast<std::size_t>(pi)] = pt.weight * v;
                continue;
            }
            const PooledMoments m = pooled_moments(cl, pt.kernel);
            double v = 0.0;
            std::vector<double> a, b;
            if (grad) {
                a.resize(static_cast<std::size_t>(d));
                b.resize(static_cast<std::size_t>(d));
            }
            for (int i = 0; i < d; ++i) {
                const double mu = m.mean[static_cast<std::size_t>(i)];
                const double var = m.var[static_cast<std::size_t>(i)];
                const double sc = std::sqrt(var);
                const double dm = mu - pt.ref_mean[static_cast<std::size_t>(i)];
                const double ds = sc - pt.ref_sqrt_var[static_cast<std::size_t>(i)];
                v += dm * dm + ds * ds;
                if (grad) {
                    const double g_mean = 2.0 * dm;
                    const double g_var = var > kVarFloor ? ds / sc : 0.0;
                    a[static_cast<std::size_t>(i)] = pt.weight * (g_mean - 2.0 * g_var * mu);
                    b[static_cast<std::size_t>(i)] = pt.weight * 2.0 * g_var;
                }
            }
            values[static_cast<std::size_t>(pi)] = pt.weight * v;
            if (grad) {
                coef_a[static_cast<std::size_t>(pi)] = std::move(a);
                coef_b[static_cast<std::size_t>(pi)] = std::move(b);
            }
        }

        for (double v : values) loss.add(v);

        if (!grad) continue;
        auto& gl = layer_grads[static_cast<std::size_t>(
            std::distance(fwd.stack.layers.data(), &cl))];

        // Fidelity points touch only their own cell; cells are distinct.
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t pi = 0; pi < static_cast<std::ptrdiff_t>(active.size()); ++pi) {
            const PointData& pt = *active[static_cast<std::size_t>(pi)];
            if (!pt.delta) continue;
            const double* z = cl.vec(pt.kernel.center_row, pt.kernel.center_col);
            double* g = gl.data() + cl.index(pt.kernel.center_row, pt.kernel.center_col, 0);
            for (int i = 0; i < d; ++i)
                g[i] += pt.weight * 2.0 * (z[i] - pt.ref_mean[static_cast<std::size_t>(i)]);
        }

        // Pooled points: gather per cell so the accumulation order is fixed
        // regardless of thread count.
        if (!pooled_idx.empty()) {
#pragma omp parallel for schedule(static)
            for (int r = 0; r < cl.height; ++r) {
                for (int c = 0; c < cl.width; ++c) {
                    const double* z = cl.vec(r, c);
                    double* g = gl.data() + cl.index(r, c, 0);
                    for (std::size_t k = 0; k < pooled_idx.size(); ++k) {
                        const std::size_t pi = pooled_idx[k];
                        const PointData& pt = *active[pi];
                        const int dr = r - pt.kernel.center_row;
                        if (dr < pt.kernel.dr_lo || dr > pt.kernel.dr_hi) continue;
                        const int dc = c - pt.kernel.center_col;
                        if (dc < pt.kernel.dc_lo || dc > pt.kernel.dc_hi) continue;
                        const double w = pt.kernel.row_weight(dr) * pt.kernel.col_weight(dc);
                        const double* a = coef_a[pi].data();
                        const double* b = coef_b[pi].data();
                        for (int i = 0; i < d; ++i) g[i] += w * (a[i] + b[i] * z[i]);
                    }
                }
            }
        }
    }

    const double total = loss.value();
    if (!std::isfinite(total)) throw std::runtime_error("SynthesisObjective: non-finite loss");

    if (grad) {
        std::vector<double> gpix = backward_stack(fwd, cfg_.features, banks_, layer_grads);
        grad->swap(gpix);
    }
    return total;
}

double loss_and_gradient(const SynthesisObjective& objective, const ImageGrid& pixels,
                         ImageGrid* gradient) {
    if (!pixels.same_shape(objective.reference()))
        throw InputError("loss_and_gradient: pixel dims do not match reference");
    std::vector<double> grad;
    const double loss = objective.evaluate(pixels.values(), gradient ? &grad : nullptr);
    if (gradient) {
        *gradient = ImageGrid(pixels.height(), pixels.width(), pixels.channels());
        gradient->values() = std::move(grad);
    }
    return loss;
}

std::pair<ImageGrid, SynthesisTrace> synthesize(const ImageGrid& reference, const SigmaMap& map,
                                                const SynthesisConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    SynthesisObjective objective(reference, map, cfg);

    std::vector<double> x0;
    if (cfg.init == InitMode::provided) {
        if (!cfg.init_image.same_shape(reference))
            throw InputError("synthesize: init image dims do not match reference");
        x0 = cfg.init_image.values();
    } else {
        x0.resize(reference.size());
        Rng rng(cfg.init_seed);
        for (double& v : x0) v = rng.uniform();
    }

    MinimizeOptions options;
    options.max_iterations = cfg.max_iterations;
    options.memory = cfg.lbfgs_memory;
    options.early_stop = cfg.early_stop;

    SynthesisObjective* obj = &objective;
    const bool rotates = objective.num_sets() > 1;
    if (rotates) {
        options.epoch = [obj](int iteration) {
            const int set = obj->plan().pick_set(static_cast<std::uint64_t>(iteration));
            const bool changed = set != obj->active_set();
            obj->set_active_set(set);
            return changed;
        };
    }

    const Objective fn = [obj](const std::vector<double>& x, std::vector<double>& g) {
        return obj->evaluate(x, &g);
    };

    MinimizeResult res;
    if (cfg.optimizer == OptimizerKind::adam_fallback) {
        res = adam_minimize(fn, std::move(x0), options);
    } else {
        res = lbfgs_minimize(fn, std::move(x0), options);
        if (res.stop_reason == StopReason::line_search_failure &&
            res.iterations + 1 < cfg.max_iterations) {
            MinimizeOptions rest = options;
            rest.max_iterations = cfg.max_iterations - res.iterations;
            MinimizeResult cont = adam_minimize(fn, std::move(res.x), rest, 0.01);
            cont.loss_trace.erase(cont.loss_trace.begin());  // repeated x
            res.x = std::move(cont.x);
            res.loss_trace.insert(res.loss_trace.end(), cont.loss_trace.begin(), cont.loss_trace.end());
            res.iterations += cont.iterations;
            res.stop_reason = cont.stop_reason;
        }
    }

    SynthesisTrace trace;
    trace.loss = std::move(res.loss_trace);
    trace.stop_reason = res.stop_reason;
    trace.final_image = ImageGrid(reference.height(), reference.width(), reference.channels());
    trace.final_image.values() = std::move(res.x);
    trace.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    return {trace.final_image.clamped01(), std::move(trace)};
}

std::vector<ProgressionEntry> sigma_progression(const ImageGrid& reference,
                                                const std::vector<double>& sigmas,
                                                SynthesisConfig cfg) {
    if (sigmas.empty()) throw std::invalid_argument("sigma_progression: empty sigma list");
    for (std::size_t i = 0; i < sigmas.size(); ++i) {
        if (sigmas[i] < 0.0) throw std::invalid_argument("sigma_progression: sigmas must be nonnegative");
        if (i > 0 && sigmas[i] < sigmas[i - 1])
            throw std::invalid_argument("sigma_progression: sigmas must be ascending");
    }
    cfg.poi_mode = PoiMode::grid;

    std::vector<ProgressionEntry> entries;
    entries.reserve(sigmas.size());
    for (double sigma : sigmas) {
        const SigmaMap map = constant_sigma(reference.height(), reference.width(), sigma);
        auto [image, trace] = synthesize(reference, map, cfg);
        ProgressionEntry e;
        e.sigma = sigma;
        e.pixel_mse = mean_squared_error(image, reference);
        e.final_loss = trace.loss.back();
        e.image = std::move(image);
        entries.push_back(std::move(e));
    }
    return entries;
}

double baseline_loss_and_gradient(const ImageGrid& reference,
                                  const std::vector<std::uint8_t>& saliency_mask, double gram_weight,
                                  const std::vector<KernelBank>& banks, const FeatureStackSpec& spec,
                                  const std::vector<double>& pixels, std::vector<double>* grad) {
    if (pixels.size() != reference.size())
        throw InputError("baseline_loss_and_gradient: pixel vector size mismatch");
    if (saliency_mask.size() != static_cast<std::size_t>(reference.height()) * reference.width())
        throw InputError("baseline_loss_and_gradient: mask size mismatch");
    if (gram_weight < 0.0) throw std::invalid_argument("baseline: gram_weight must be >= 0");

    ImageGrid candidate(reference.height(), reference.width(), reference.channels());
    candidate.values() = pixels;
    const StackForward fwd = forward_stack(candidate, spec, banks);
    const FeatureStack ref_stack = feature_stack_with_banks(reference, spec, banks);

    std::vector<std::vector<double>> layer_grads;
    if (grad) {
        layer_grads.resize(fwd.stack.layers.size());
        for (std::size_t li = 0; li < fwd.stack.layers.size(); ++li)
            layer_grads[li].assign(fwd.stack.layers[li].values.size(), 0.0);
    }

    // Masked MSE over layer 0.
    KahanSum loss;
    std::size_t masked = 0;
    for (int r = 0; r < reference.height(); ++r)
        for (int c = 0; c < reference.width(); ++c) {
            if (!saliency_mask[static_cast<std::size_t>(r) * reference.width() + c]) continue;
            ++masked;
            for (int ch = 0; ch < reference.channels(); ++ch) {
                const double dv = candidate.at(r, c, ch) - reference.at(r, c, ch);
                loss.add(dv * dv);
            }
        }
    const double mse_norm =
        masked == 0 ? 0.0 : 1.0 / (static_cast<double>(masked) * reference.channels());
    double total = loss.value() * mse_norm;
    if (grad && masked > 0) {
        auto& g0 = layer_grads[0];
        for (int r = 0; r < reference.height(); ++r)
            for (int c = 0; c < reference.width(); ++c) {
                if (!saliency_mask[static_cast<std::size_t>(r) * reference.width() + c]) continue;
                for (int ch = 0; ch < reference.channels(); ++ch)
                    g0[candidate.index(r, c, ch)] +=
                        2.0 * mse_norm * (candidate.at(r, c, ch) - reference.at(r, c, ch));
            }
    }

    // Gram term over conv layers: (1/d^2) ||G - G_ref||_F^2 with
    // G = (1/(HW)) sum_p z_p z_p^T.
    if (gram_weight > 0.0) {
        for (int l = 1; l <= spec.num_layers; ++l) {
            const FeatureLayer& cl = fwd.stack.layers[static_cast<std::size_t>(l)];
            const FeatureLayer& rl = ref_stack.layers[static_cast<std::size_t>(l)];
            const int d = cl.depth;
            const std::size_t cells = static_cast<std::size_t>(cl.height) * cl.width;
            const double inv_cells = 1.0 / static_cast<double>(cells);

            auto gram = [&](const FeatureLayer& layer) {
                std::vector<double> g(static_cast<std::size_t>(d) * d, 0.0);
                for (std::size_t p = 0; p < cells; ++p) {
                    const double* z = layer.values.data() + p * d;
                    for (int i = 0; i < d; ++i)
                        for (int j = i; j < d; ++j) g[static_cast<std::size_t>(i) * d + j] += z[i] * z[j];
                }
                for (int i = 0; i < d; ++i)
                    for (int j = i; j < d; ++j) {
                        g[static_cast<std::size_t>(i) * d + j] *= inv_cells;
                        g[static_cast<std::size_t>(j) * d + i] = g[static_cast<std::size_t>(i) * d + j];
                    }
                return g;
            };

            const std::vector<double> gc = gram(cl);
            const std::vector<double> gr = gram(rl);
            std::vector<double> diff(gc.size());
            double fro2 = 0.0;
            for (std::size_t i = 0; i < gc.size(); ++i) {
                diff[i] = gc[i] - gr[i];
                fro2 += diff[i] * diff[i];
            }
            const double norm = 1.0 / (static_cast<double>(d) * d);
            total += gram_weight * norm * fro2;

            if (grad) {
                auto& gl = layer_grads[static_cast<std::size_t>(l)];
                const double scale = gram_weight * norm * 4.0 * inv_cells;
#pragma omp parallel for schedule(static)
                for (std::ptrdiff_t p = 0; p < static_cast<std::ptrdiff_t>(cells); ++p) {
                    const double* z = cl.values.data() + static_cast<std::size_t>(p) * d;
                    double* g = gl.data() + static_cast<std::size_t>(p) * d;
                    for (int i = 0; i < d; ++i) {
                        double acc = 0.0;
                        for (int j = 0; j < d; ++j) acc += diff[static_cast<std::size_t>(i) * d + j] * z[j];
                        g[i] += scale * acc;
                    }
                }
            }
        }
    }

    if (!std::isfinite(total)) throw std::runtime_error("baseline: non-finite loss");
    if (grad) {
        std::vector<std::vector<double>> lg = std::move(layer_grads);
        std::vector<double> gpix = backward_stack(fwd, spec, banks, lg);
        grad->swap(gpix);
    }
    return total;
}

std::pair<ImageGrid, SynthesisTrace> baseline_mse_plus_gram(const ImageGrid& reference,
                                                            const std::vector<std::uint8_t>& saliency_mask,
                                                            double gram_weight,
                                                            const SynthesisConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<KernelBank> banks = banks_for_spec(cfg.features, reference.channels());

    std::vector<double> x0;
    if (cfg.init == InitMode::provided) {
        if (!cfg.init_image.same_shape(reference))
            throw InputError("baseline_mse_plus_gram: init image dims do not match reference");
        x0 = cfg.init_image.values();
    } else {
        x0.resize(reference.size());
        Rng rng(cfg.init_seed);
        for (double& v : x0) v = rng.uniform();
    }

    MinimizeOptions options;
    options.max_iterations = cfg.max_iterations;
    options.memory = cfg.lbfgs_memory;
    options.early_stop = cfg.early_stop;

    const Objective fn = [&](const std::vector<double>& x, std::vector<double>& g) {
        return baseline_loss_and_gradient(reference, saliency_mask, gram_weight, banks, cfg.features,
                                          x, &g);
    };

    MinimizeResult res = cfg.optimizer == OptimizerKind::adam_fallback
                             ? adam_minimize(fn, std::move(x0), options)
                             : lbfgs_minimize(fn, std::move(x0), options);

    SynthesisTrace trace;
    trace.loss = std::move(res.loss_trace);
    trace.stop_reason = res.stop_reason;
    trace.final_image = ImageGrid(reference.height(), reference.width(), reference.channels());
    trace.final_image.values() = std::move(res.x);
    trace.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {trace.final_image.clamped01(), std::move(trace)};
}

}  // namespace wd
