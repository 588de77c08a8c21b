#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wd/distortion.hpp"

namespace wd {

// Two-sided scalar sequence with a deterministic extension rule.
class Seq1D {
public:
    enum class Extension { periodic, zero, iid_uniform };

    // value(k) = pattern[k mod P], both directions; period = pattern length.
    static Seq1D periodic(std::vector<double> pattern);
    // Centered window (odd length), zero outside.
    static Seq1D zero_extended(std::vector<double> window);
    // value(k) = uniform [0,1) from a counter hash of (seed, k).
    static Seq1D iid_uniform(std::uint64_t seed);

    double value(long long k) const;
    Extension extension() const { return extension_; }

    // The limiting empirical distribution: pattern values with equal weights
    // for periodic; a deterministic quantile quasi-sample of the law for iid.
    WeightedEmpirical limit_distribution(int iid_samples = 1000000) const;

private:
    Extension extension_ = Extension::zero;
    std::vector<double> window_;
    std::uint64_t seed_ = 0;
};

// Sum_k q_sigma(k) a(k) over the truncated pooling PMF.
double cesaro_weighted_sum(const Seq1D& a, double sigma, double tail_mass_bound = 1e-9);

struct TableRow {
    double sigma = 0.0;
    double value = 0.0;
    double target = 0.0;
    double abs_error = 0.0;
};

struct ConvergenceTable {
    std::vector<TableRow> rows;
    double tolerance = 0.0;
    bool pass = false;
    std::string detail;
};

// Pooled distortion at index 0 of two scalar sequences.
double pooled_distortion_at_zero(const Seq1D& z, const Seq1D& zhat, double sigma, double p,
                                 double tail_mass_bound = 1e-9);

// Distortion along sigmas descending toward 0 against the pointwise target
// |z0 - zhat0|^p. Pass: final error < tol and the error sequence settles near
// its minimum.
ConvergenceTable fidelity_limit_table(const Seq1D& z, const Seq1D& zhat, double p,
                                      const std::vector<double>& sigmas, double tolerance = 1e-3);

// Distortion along ascending sigmas against W_p^p of the limiting empirical
// distributions. Requires periodic or iid extensions.
ConvergenceTable realism_limit_table(const Seq1D& z, const Seq1D& zhat, double p,
                                     const std::vector<double>& sigmas, double tolerance = 1e-2);

// CSV: header sigma,value,target,abs_error.
void write_table_csv(const std::string& path, const ConvergenceTable& table);

}  // namespace wd
