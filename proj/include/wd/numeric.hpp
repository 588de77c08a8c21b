#pragma once

#include <cstddef>
#include <vector>

namespace wd {

// Compensated accumulator. Weight vectors here can have ~1e5 terms and the
// normalization contract is 1e-12, which plain left-to-right summation does
// not reliably meet.
class KahanSum {
public:
    void add(double v) {
        const double y = v - comp_;
        const double t = sum_ + y;
        comp_ = (t - sum_) - y;
        sum_ = t;
    }
    double value() const { return sum_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

inline double kahan_sum(const double* v, std::size_t n) {
    KahanSum acc;
    for (std::size_t i = 0; i < n; ++i) acc.add(v[i]);
    return acc.value();
}

inline double kahan_sum(const std::vector<double>& v) {
    return kahan_sum(v.data(), v.size());
}

}  // namespace wd
