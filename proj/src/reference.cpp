#include "wd/reference.hpp"

#include <stdexcept>

#include "wd/errors.hpp"
#include "wd/numeric.hpp"

namespace wd::ref {

FeatureLayer conv_bank_apply(const FeatureLayer& input, const KernelBank& bank) {
    if (bank.in_channels != input.depth)
        throw InputError("ref::conv_bank_apply: bank input channels do not match layer depth");
    const int h = input.height, w = input.width, k = bank.kernel_size;
    const int pad = k / 2;

    FeatureLayer out;
    out.layer_id = input.layer_id;
    out.scale = input.scale;
    out.height = h;
    out.width = w;
    out.depth = bank.out_channels;
    out.values.resize(static_cast<std::size_t>(h) * w * bank.out_channels);

    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            for (int oc = 0; oc < bank.out_channels; ++oc) {
                double acc = 0.0;
                for (int ic = 0; ic < bank.in_channels; ++ic)
                    for (int a = 0; a < k; ++a)
                        for (int b = 0; b < k; ++b) {
                            const int rr = mirror_index(r + a - pad, h);
                            const int cc = mirror_index(c + b - pad, w);
                            acc += bank.tap(oc, ic, a, b) * input.at(rr, cc, ic);
                        }
                if (bank.nonlinearity == Nonlinearity::rectify && acc < 0.0) acc = 0.0;
                out.at(r, c, oc) = acc;
            }
    return out;
}

PooledMoments pooled_moments(const FeatureLayer& layer, const PoolingKernel2D& kernel) {
    if (kernel.rows != layer.height || kernel.cols != layer.width)
        throw InputError("ref::pooled_moments: kernel bounds do not match layer dims");
    PooledMoments m;
    m.center_row = kernel.center_row;
    m.center_col = kernel.center_col;
    m.sigma = kernel.sigma;
    m.mean.assign(static_cast<std::size_t>(layer.depth), 0.0);
    m.var.assign(static_cast<std::size_t>(layer.depth), 0.0);
    if (kernel.is_delta()) {
        const double* z = layer.vec(kernel.center_row, kernel.center_col);
        for (int i = 0; i < layer.depth; ++i) m.mean[static_cast<std::size_t>(i)] = z[i];
        return m;
    }
    std::vector<double> sq(static_cast<std::size_t>(layer.depth), 0.0);
    for (int dr = kernel.dr_lo; dr <= kernel.dr_hi; ++dr) {
        const double wr = kernel.row_weight(dr);
        for (int dc = kernel.dc_lo; dc <= kernel.dc_hi; ++dc) {
            const double wgt = wr * kernel.col_weight(dc);
            const double* z = layer.vec(kernel.center_row + dr, kernel.center_col + dc);
            for (int i = 0; i < layer.depth; ++i) {
                m.mean[static_cast<std::size_t>(i)] += wgt * z[i];
                sq[static_cast<std::size_t>(i)] += wgt * z[i] * z[i];
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

DistortionReport total_distortion(const FeatureStack& ref_stack, const FeatureStack& rec,
                                  const PoiPlan& plan, const Multipliers& mult,
                                  const DistortionParams& params, int active_set) {
    if (!ref_stack.layer_compatible(rec)) throw InputError("ref::total_distortion: incompatible stacks");

    DistortionReport report;
    KahanSum total;
    std::map<int, KahanSum> per_layer;
    bool any = false;

    for (const auto& lp : plan.layers) {
        const FeatureLayer* rl = ref_stack.find(lp.layer_id);
        const FeatureLayer* cl = rec.find(lp.layer_id);
        if (!rl || !cl) throw InputError("ref::total_distortion: no such layer");
        const double ml = mult.layer(lp.layer_id);

        auto eval = [&](const PoiPoint& p) {
            any = true;
            const double value =
                local_distortion(ref_stack, rec, lp.layer_id, p.row, p.col, p.sigma, params);
            const double m_sigma = p.sigma == 0.0 ? mult.sigma_zero : mult.sigma_pos;
            const double weighted = value * m_sigma * ml;
            report.per_point.push_back({lp.layer_id, p.row, p.col, p.sigma, value, weighted});
            total.add(weighted);
            per_layer[lp.layer_id].add(weighted);
        };
        for (const auto& p : lp.fixed) eval(p);
        if (!lp.rotating_sets.empty()) {
            if (active_set < 0 || active_set >= static_cast<int>(lp.rotating_sets.size()))
                throw std::invalid_argument("ref::total_distortion: active_set out of range");
            for (const auto& p : lp.rotating_sets[static_cast<std::size_t>(active_set)]) eval(p);
        }
    }
    if (!any) throw std::invalid_argument("ref::total_distortion: empty plan");

    report.total = total.value();
    for (const auto& [id, acc] : per_layer) report.per_layer[id] = acc.value();
    return report;
}

}  // namespace wd::ref
