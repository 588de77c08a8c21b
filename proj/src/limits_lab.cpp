#include "wd/limits_lab.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "wd/errors.hpp"
#include "wd/numeric.hpp"
#include "wd/pooling.hpp"
#include "wd/rng.hpp"

namespace wd {

Seq1D Seq1D::periodic(std::vector<double> pattern) {
    if (pattern.empty()) throw std::invalid_argument("Seq1D::periodic: empty pattern");
    Seq1D s;
    s.extension_ = Extension::periodic;
    s.window_ = std::move(pattern);
    return s;
}

Seq1D Seq1D::zero_extended(std::vector<double> window) {
    if (window.empty() || window.size() % 2 == 0)
        throw std::invalid_argument("Seq1D::zero_extended: window must be odd-length and non-empty");
    Seq1D s;
    s.extension_ = Extension::zero;
    s.window_ = std::move(window);
    return s;
}

Seq1D Seq1D::iid_uniform(std::uint64_t seed) {
    Seq1D s;
    s.extension_ = Extension::iid_uniform;
    s.seed_ = seed;
    s.window_ = {u64_to_unit_double(splitmix64(seed))};  // value(0), same rule as below
    return s;
}

double Seq1D::value(long long k) const {
    switch (extension_) {
        case Extension::periodic: {
            const long long p = static_cast<long long>(window_.size());
            long long i = k % p;
            if (i < 0) i += p;
            return window_[static_cast<std::size_t>(i)];
        }
        case Extension::zero: {
            const long long half = static_cast<long long>(window_.size() / 2);
            if (k < -half || k > half) return 0.0;
            return window_[static_cast<std::size_t>(k + half)];
        }
        case Extension::iid_uniform: {
            const std::uint64_t uk = static_cast<std::uint64_t>(k);
            return u64_to_unit_double(splitmix64(seed_ ^ splitmix64(uk + 0x51ed2701)));
        }
    }
    return 0.0;
}

WeightedEmpirical Seq1D::limit_distribution(int iid_samples) const {
    WeightedEmpirical e;
    switch (extension_) {
        case Extension::periodic: {
            const double w = 1.0 / static_cast<double>(window_.size());
            e.support = window_;
            e.weights.assign(window_.size(), w);
            return e;
        }
        case Extension::iid_uniform: {
            // Quantile quasi-sample of the uniform law: removes sampling noise
            // from the target.
            e.support.resize(static_cast<std::size_t>(iid_samples));
            const double w = 1.0 / static_cast<double>(iid_samples);
            for (int i = 0; i < iid_samples; ++i)
                e.support[static_cast<std::size_t>(i)] = (static_cast<double>(i) + 0.5) * w;
            e.weights.assign(static_cast<std::size_t>(iid_samples), w);
            return e;
        }
        case Extension::zero:
            throw InputError("Seq1D: zero-extended sequences have no limiting distribution");
    }
    throw std::logic_error("Seq1D: bad extension");
}

double cesaro_weighted_sum(const Seq1D& a, double sigma, double tail_mass_bound) {
    const PoolingPmf1D pmf = make_tsg_pmf(sigma, tail_mass_bound);
    KahanSum acc;
    for (int k = -pmf.truncation_radius; k <= pmf.truncation_radius; ++k) {
        const double term = pmf.weight(k) * a.value(k);
        if (!std::isfinite(term)) throw std::invalid_argument("cesaro_weighted_sum: non-finite term");
        acc.add(term);
    }
    return acc.value();
}

namespace {

WeightedEmpirical pooled_at_zero(const Seq1D& z, const PoolingPmf1D& pmf) {
    WeightedEmpirical e;
    const int radius = pmf.truncation_radius;
    e.support.resize(static_cast<std::size_t>(2 * radius + 1));
    e.weights.resize(e.support.size());
    for (int k = -radius; k <= radius; ++k) {
        e.support[static_cast<std::size_t>(k + radius)] = z.value(k);
        e.weights[static_cast<std::size_t>(k + radius)] = pmf.weight(k);
    }
    return e;
}

// Pass when the final error is under tolerance and the sequence has settled:
// it ends at (near) its minimum and did not grow from the start.
void finish_verdict(ConvergenceTable& table) {
    if (table.rows.empty()) {
        table.pass = false;
        table.detail = "empty table";
        return;
    }
    double min_err = table.rows.front().abs_error;
    for (const auto& r : table.rows) min_err = std::min(min_err, r.abs_error);
    const double first = table.rows.front().abs_error;
    const double last = table.rows.back().abs_error;
    table.pass = last < table.tolerance && last <= first + table.tolerance &&
                 last <= min_err + table.tolerance;
    if (!table.pass) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "final_error=%.6g tolerance=%.3g first_error=%.6g",
                      last, table.tolerance, first);
        table.detail = buf;
    }
}

void check_sigma_grid(const std::vector<double>& sigmas, bool ascending, const char* who) {
    if (sigmas.size() < 2) throw InputError(std::string(who) + ": sigma grid too short for a trend verdict");
    for (std::size_t i = 1; i < sigmas.size(); ++i) {
        const bool ok = ascending ? sigmas[i] > sigmas[i - 1] : sigmas[i] < sigmas[i - 1];
        if (!ok) throw std::invalid_argument(std::string(who) + ": sigma grid must be strictly monotone");
    }
}

}  // namespace

double pooled_distortion_at_zero(const Seq1D& z, const Seq1D& zhat, double sigma, double p,
                                 double tail_mass_bound) {
    const PoolingPmf1D pmf = make_tsg_pmf(sigma, tail_mass_bound);
    return exact_w_p_1d(pooled_at_zero(z, pmf), pooled_at_zero(zhat, pmf), p);
}

ConvergenceTable fidelity_limit_table(const Seq1D& z, const Seq1D& zhat, double p,
                                      const std::vector<double>& sigmas, double tolerance) {
    check_sigma_grid(sigmas, /*ascending=*/false, "fidelity_limit_table");
    const double target = std::pow(std::abs(z.value(0) - zhat.value(0)), p);
    ConvergenceTable table;
    table.tolerance = tolerance;
    for (double sigma : sigmas) {
        const double value = pooled_distortion_at_zero(z, zhat, sigma, p);
        table.rows.push_back({sigma, value, target, std::abs(value - target)});
    }
    finish_verdict(table);
    return table;
}

ConvergenceTable realism_limit_table(const Seq1D& z, const Seq1D& zhat, double p,
                                     const std::vector<double>& sigmas, double tolerance) {
    check_sigma_grid(sigmas, /*ascending=*/true, "realism_limit_table");
    if (z.extension() == Seq1D::Extension::zero || zhat.extension() == Seq1D::Extension::zero)
        throw InputError("realism_limit_table: zero-extended sequences have no limiting distribution");
    const double target = exact_w_p_1d(z.limit_distribution(), zhat.limit_distribution(), p);
    ConvergenceTable table;
    table.tolerance = tolerance;
    for (double sigma : sigmas) {
        const double value = pooled_distortion_at_zero(z, zhat, sigma, p);
        table.rows.push_back({sigma, value, target, std::abs(value - target)});
    }
    finish_verdict(table);
    return table;
}

void write_table_csv(const std::string& path, const ConvergenceTable& table) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("write_table_csv: cannot open: " + path);
    f << "sigma,value,target,abs_error\n";
    char buf[256];
    for (const auto& r : table.rows) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g\n", r.sigma, r.value, r.target,
                      r.abs_error);
        f << buf;
    }
    if (!f) throw IoError("write_table_csv: write failed: " + path);
}

}  // namespace wd
