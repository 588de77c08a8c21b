#include "wd/pooling.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "wd/numeric.hpp"

namespace wd {

PoolingPmf1D make_tsg_pmf(double sigma, double tail_mass_bound) {
    if (!(sigma >= 0.0) || !std::isfinite(sigma))
        throw std::invalid_argument("make_tsg_pmf: sigma must be a finite nonnegative real");
    if (!(tail_mass_bound > 0.0 && tail_mass_bound < 1.0))
        throw std::invalid_argument("make_tsg_pmf: tail_mass_bound must lie in (0,1)");

    PoolingPmf1D pmf;
    pmf.sigma = sigma;
    if (sigma == 0.0) {
        pmf.truncation_radius = 0;
        pmf.weights = {1.0};
        return pmf;
    }

    const double r = std::exp(-1.0 / sigma);
    // Tail mass beyond radius R before renormalization is 2 r^{R+1} / (1+r);
    // pick the smallest R that pushes it under the bound.
    const double target = tail_mass_bound * (1.0 + r) / 2.0;
    int radius = 0;
    if (r > 0.0) {
        const double est = std::log(target) / std::log(r) - 1.0;
        radius = est > 0.0 ? static_cast<int>(est) : 0;
        while (std::pow(r, static_cast<double>(radius) + 1.0) >= target) ++radius;
        while (radius > 0 && std::pow(r, static_cast<double>(radius)) < target) --radius;
    }

    pmf.truncation_radius = radius;
    pmf.weights.assign(static_cast<std::size_t>(2 * radius + 1), 0.0);
    // r^|k| built by iterated multiplication: deterministic and monotone.
    std::vector<double> powers(static_cast<std::size_t>(radius + 1));
    powers[0] = 1.0;
    for (int k = 1; k <= radius; ++k) powers[static_cast<std::size_t>(k)] = powers[static_cast<std::size_t>(k - 1)] * r;

    KahanSum total;
    total.add(1.0);
    for (int k = 1; k <= radius; ++k) {
        total.add(powers[static_cast<std::size_t>(k)]);
        total.add(powers[static_cast<std::size_t>(k)]);
    }
    const double norm = total.value();
    for (int k = -radius; k <= radius; ++k)
        pmf.weights[static_cast<std::size_t>(k + radius)] = powers[static_cast<std::size_t>(std::abs(k))] / norm;
    return pmf;
}

namespace {

std::vector<double> clip_and_renormalize(const PoolingPmf1D& pmf, int lo, int hi) {
    std::vector<double> w(static_cast<std::size_t>(hi - lo + 1));
    KahanSum total;
    for (int k = lo; k <= hi; ++k) {
        const double v = pmf.weight(k);
        w[static_cast<std::size_t>(k - lo)] = v;
        total.add(v);
    }
    const double norm = total.value();
    for (double& v : w) v /= norm;
    return w;
}

}  // namespace

PoolingKernel2D product_kernel_2d(const PoolingPmf1D& pmf, int center_row, int center_col,
                                  int rows, int cols) {
    if (rows <= 0 || cols <= 0) throw std::invalid_argument("product_kernel_2d: empty bounds");
    if (center_row < 0 || center_row >= rows || center_col < 0 || center_col >= cols)
        throw std::invalid_argument("product_kernel_2d: center outside bounds");

    PoolingKernel2D k;
    k.sigma = pmf.sigma;
    k.center_row = center_row;
    k.center_col = center_col;
    k.rows = rows;
    k.cols = cols;
    const int radius = pmf.truncation_radius;
    k.dr_lo = std::max(-radius, -center_row);
    k.dr_hi = std::min(radius, rows - 1 - center_row);
    k.dc_lo = std::max(-radius, -center_col);
    k.dc_hi = std::min(radius, cols - 1 - center_col);
    k.row_weights = clip_and_renormalize(pmf, k.dr_lo, k.dr_hi);
    k.col_weights = clip_and_renormalize(pmf, k.dc_lo, k.dc_hi);
    return k;
}

PoolingKernel2D kernel_from_weights(double sigma, int center_row, int center_col, int rows, int cols,
                                    int dr_lo, std::vector<double> row_weights,
                                    int dc_lo, std::vector<double> col_weights) {
    if (row_weights.empty() || col_weights.empty())
        throw std::invalid_argument("kernel_from_weights: empty weights");
    PoolingKernel2D k;
    k.sigma = sigma;
    k.center_row = center_row;
    k.center_col = center_col;
    k.rows = rows;
    k.cols = cols;
    k.dr_lo = dr_lo;
    k.dr_hi = dr_lo + static_cast<int>(row_weights.size()) - 1;
    k.dc_lo = dc_lo;
    k.dc_hi = dc_lo + static_cast<int>(col_weights.size()) - 1;
    if (center_row + k.dr_lo < 0 || center_row + k.dr_hi >= rows || center_col + k.dc_lo < 0 ||
        center_col + k.dc_hi >= cols)
        throw std::invalid_argument("kernel_from_weights: support leaves bounds");
    const double rnorm = kahan_sum(row_weights);
    for (double& v : row_weights) v /= rnorm;
    const double cnorm = kahan_sum(col_weights);
    for (double& v : col_weights) v /= cnorm;
    k.row_weights = std::move(row_weights);
    k.col_weights = std::move(col_weights);
    return k;
}

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

}  // namespace

std::string AxiomReport::to_string() const {
    std::ostringstream os;
    for (const auto& c : checks)
        os << (c.pass ? "[pass] " : "[FAIL] ") << c.name << (c.detail.empty() ? "" : ": " + c.detail)
           << "\n";
    if (!note.empty()) os << "note: " << note << "\n";
    return os.str();
}

AxiomReport check_pmf_axioms(const std::vector<double>& sigmas, const PmfBuilder& builder,
                             int max_offset) {
    if (sigmas.empty()) throw std::invalid_argument("check_pmf_axioms: empty sigma grid");
    if (!std::is_sorted(sigmas.begin(), sigmas.end()))
        throw std::invalid_argument("check_pmf_axioms: sigma grid must be ascending");
    if (sigmas.front() != 0.0) throw std::invalid_argument("check_pmf_axioms: sigma grid must include 0");

    AxiomReport report;
    std::vector<PoolingPmf1D> pmfs;
    pmfs.reserve(sigmas.size());
    for (double s : sigmas) pmfs.push_back(builder(s));

    // Proper PMF: nonnegative, normalized.
    {
        bool ok = true;
        std::string detail;
        for (std::size_t i = 0; i < pmfs.size(); ++i) {
            const auto& p = pmfs[i];
            double lo = 0.0;
            for (double w : p.weights) lo = std::min(lo, w);
            const double total = kahan_sum(p.weights);
            if (lo < 0.0 || std::abs(total - 1.0) > 1e-12) {
                ok = false;
                detail = "sigma=" + fmt(sigmas[i]) + " sum=" + fmt(total) + " min=" + fmt(lo);
                break;
            }
        }
        report.checks.push_back({"normalized_nonnegative", ok, detail});
    }

    // Symmetry: weight(k) == weight(-k).
    {
        bool ok = true;
        std::string detail;
        for (std::size_t i = 0; i < pmfs.size() && ok; ++i) {
            const auto& p = pmfs[i];
            for (int k = 1; k <= p.truncation_radius; ++k) {
                const double a = p.weight(k), b = p.weight(-k);
                if (std::abs(a - b) > 1e-12 * std::max(1.0, std::abs(a))) {
                    ok = false;
                    detail = "sigma=" + fmt(sigmas[i]) + " k=" + std::to_string(k);
                    break;
                }
            }
        }
        report.checks.push_back({"symmetric", ok, detail});
    }

    // Unimodality: |k| <= |k'| implies weight(k) >= weight(k').
    {
        bool ok = true;
        std::string detail;
        for (std::size_t i = 0; i < pmfs.size() && ok; ++i) {
            const auto& p = pmfs[i];
            for (int k = 0; k < p.truncation_radius; ++k) {
                if (p.weight(k) + 1e-15 < p.weight(k + 1)) {
                    ok = false;
                    detail = "sigma=" + fmt(sigmas[i]) + " k=" + std::to_string(k);
                    break;
                }
            }
        }
        report.checks.push_back({"unimodal", ok, detail});
    }

    // Delta at sigma = 0.
    {
        const auto& p0 = pmfs.front();
        bool ok = std::abs(p0.weight(0) - 1.0) <= 1e-15;
        for (int k = 1; k <= p0.truncation_radius && ok; ++k)
            if (p0.weight(k) != 0.0 || p0.weight(-k) != 0.0) ok = false;
        report.checks.push_back({"delta_at_zero", ok, ok ? "" : "weight(0)=" + fmt(p0.weight(0))});
    }

    // Continuity at sigma = 0, sampled: max_k |q_sigma(k) - q_0(k)| shrinks as
    // sigma descends through the grid and is small at the smallest positive sigma.
    {
        std::vector<double> dist;  // indexed like sigmas[1..]
        for (std::size_t i = 1; i < pmfs.size(); ++i) {
            const auto& p = pmfs[i];
            const int kmax = std::min(max_offset, std::max(p.truncation_radius, 1));
            double m = std::abs(p.weight(0) - 1.0);
            for (int k = 1; k <= kmax; ++k) m = std::max(m, std::abs(p.weight(k)));
            dist.push_back(m);
        }
        bool ok = !dist.empty();
        for (std::size_t i = 0; i + 1 < dist.size(); ++i)
            if (dist[i] > dist[i + 1] + 1e-12) ok = false;  // must shrink toward sigma=0
        if (ok && dist.front() > 0.05) ok = false;
        report.checks.push_back(
            {"continuous_at_zero", ok, ok ? "" : "max deviation at smallest sigma=" + fmt(dist.empty() ? -1.0 : dist.front())});
    }

    // Tail growth near sigma = 0: for |k| >= 1, weights nondecreasing in sigma
    // on the window [0, eps], eps = second positive grid sigma.
    {
        bool ok = true;
        std::string detail;
        const std::size_t upper = std::min<std::size_t>(pmfs.size() - 1, 2);  // pairs within [0, sigmas[2]]
        for (std::size_t i = 0; i < upper && ok; ++i) {
            const auto& pa = pmfs[i];
            const auto& pb = pmfs[i + 1];
            const int kmax = std::min(max_offset, std::max({pa.truncation_radius, pb.truncation_radius, 1}));
            for (int k = 1; k <= kmax; ++k) {
                if (pa.weight(k) > pb.weight(k) + 1e-15) {
                    ok = false;
                    detail = "sigma " + fmt(sigmas[i]) + "->" + fmt(sigmas[i + 1]) + " k=" + std::to_string(k);
                    break;
                }
            }
        }
        report.checks.push_back({"small_sigma_tail_growth", ok, detail});
    }

    // Vanishing at large sigma: every weight small at the largest grid sigma.
    {
        const auto& p = pmfs.back();
        const int kmax = std::min(max_offset, p.truncation_radius);
        double m = 0.0;
        for (int k = 0; k <= kmax; ++k) m = std::max(m, p.weight(k));
        const bool ok = m < 1e-3;
        report.checks.push_back({"vanishes_at_large_sigma", ok, "max weight=" + fmt(m)});
    }

    report.note =
        "tail-growth and continuity are sampled on the given sigma grid (window [0, second "
        "positive sigma], offsets |k| <= " +
        std::to_string(max_offset) + "); they are not certified beyond it";
    return report;
}

}  // namespace wd
