#include "wd/lbfgs.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>

namespace wd {

const char* stop_reason_name(StopReason reason) {
    switch (reason) {
        case StopReason::max_iter: return "max_iter";
        case StopReason::early_stop: return "early_stop";
        case StopReason::line_search_failure: return "line_search_failure";
    }
    return "?";
}

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double inf_norm(const std::vector<double>& a) {
    double m = 0.0;
    for (double v : a) m = std::max(m, std::abs(v));
    return m;
}

void axpy(std::vector<double>& y, double alpha, const std::vector<double>& x) {
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += alpha * x[i];
}

struct Pair {
    std::vector<double> s, y;
    double rho;
};

// Best-loss window rule: stop once the relative improvement of the running
// best over the last `window` iterations falls under rel_improvement.
class EarlyStopTracker {
public:
    explicit EarlyStopTracker(const EarlyStop& cfg) : cfg_(cfg) {}

    void record(double f) {
        best_ = history_.empty() ? f : std::min(best_, f);
        history_.push_back(best_);
    }
    bool should_stop() const {
        const int t = static_cast<int>(history_.size()) - 1;
        if (t < cfg_.window) return false;
        const double then = history_[static_cast<std::size_t>(t - cfg_.window)];
        const double now = history_[static_cast<std::size_t>(t)];
        const double rel = (then - now) / std::max(std::abs(then), 1e-30);
        return rel < cfg_.rel_improvement;
    }

private:
    EarlyStop cfg_;
    std::vector<double> history_;
    double best_ = 0.0;
};

constexpr double kC1 = 1e-4;
constexpr double kC2 = 0.9;
constexpr int kMaxLineEvals = 30;

struct LineSearchResult {
    bool ok = false;
    double alpha = 0.0;
    double f = 0.0;  // at the accepted point
};

// Strong Wolfe via bracket + zoom (bisection with sufficient-decrease /
// curvature tests). xt/gt hold the state at the returned alpha.
LineSearchResult strong_wolfe(const Objective& objective, const std::vector<double>& x,
                              const std::vector<double>& d, double f0, double dphi0,
                              double alpha_init, std::vector<double>& xt, std::vector<double>& gt) {
    LineSearchResult res;
    const auto eval = [&](double alpha, double& f, double& dphi) {
        xt = x;
        axpy(xt, alpha, d);
        f = objective(xt, gt);
        dphi = dot(gt, d);
    };

    double alpha_prev = 0.0, f_prev = f0, dphi_prev = dphi0;
    double alpha = alpha_init;
    int evals = 0;

    double lo = 0.0, hi = 0.0, f_lo = f0;
    bool bracketed = false;

    for (; evals < kMaxLineEvals && !bracketed; ++evals) {
        double f, dphi;
        eval(alpha, f, dphi);
        if (!std::isfinite(f)) {
            alpha *= 0.5;  // back off from a blow-up region
            if (alpha < 1e-20) return res;
            continue;
        }
        if (f > f0 + kC1 * alpha * dphi0 || (evals > 0 && f >= f_prev)) {
            lo = alpha_prev;
            f_lo = f_prev;
            hi = alpha;
            bracketed = true;
            break;
        }
        if (std::abs(dphi) <= -kC2 * dphi0) {
            res.ok = true;
            res.alpha = alpha;
            res.f = f;
            return res;
        }
        if (dphi >= 0.0) {
            lo = alpha;
            f_lo = f;
            hi = alpha_prev;
            bracketed = true;
            break;
        }
        alpha_prev = alpha;
        f_prev = f;
        dphi_prev = dphi;
        alpha *= 2.0;
        if (alpha > 1e10) return res;
    }
    (void)dphi_prev;
    if (!bracketed) return res;

    for (; evals < kMaxLineEvals; ++evals) {
        const double mid = 0.5 * (lo + hi);
        if (std::abs(hi - lo) < 1e-16 * std::max(1.0, std::abs(lo))) break;
        double f, dphi;
        eval(mid, f, dphi);
        if (!std::isfinite(f) || f > f0 + kC1 * mid * dphi0 || f >= f_lo) {
            hi = mid;
            continue;
        }
        if (std::abs(dphi) <= -kC2 * dphi0) {
            res.ok = true;
            res.alpha = mid;
            res.f = f;
            return res;
        }
        if (dphi * (hi - lo) >= 0.0) hi = lo;
        lo = mid;
        f_lo = f;
    }

    // Bracket collapsed without meeting the curvature test; accept the last
    // point satisfying sufficient decrease, if any.
    if (f_lo < f0 && lo > 0.0) {
        double f, dphi;
        eval(lo, f, dphi);
        if (std::isfinite(f) && f < f0) {
            res.ok = true;
            res.alpha = lo;
            res.f = f;
            return res;
        }
    }
    return res;
}

}  // namespace

MinimizeResult lbfgs_minimize(const Objective& objective, std::vector<double> x0,
                              const MinimizeOptions& options) {
    if (options.max_iterations < 1) throw std::invalid_argument("lbfgs_minimize: max_iterations >= 1");
    const std::size_t n = x0.size();
    MinimizeResult result;
    result.x = std::move(x0);

    std::vector<double> g(n), xt(n), gt(n), d(n);
    if (options.epoch) options.epoch(0);
    double f = objective(result.x, g);
    if (!std::isfinite(f)) throw std::invalid_argument("lbfgs_minimize: objective not finite at x0");
    result.loss_trace.push_back(f);

    EarlyStopTracker stopper(options.early_stop);
    stopper.record(f);

    std::deque<Pair> pairs;
    result.stop_reason = StopReason::max_iter;

    for (int iter = 0; iter < options.max_iterations; ++iter) {
        if (options.epoch && iter > 0 && options.epoch(iter)) {
            f = objective(result.x, g);  // objective changed under us
        }
        if (inf_norm(g) <= 1e-14 * std::max(1.0, std::abs(f))) {
            result.stop_reason = StopReason::early_stop;
            break;
        }

        // Two-loop recursion.
        d = g;
        for (double& v : d) v = -v;
        std::vector<double> alphas(pairs.size());
        for (std::size_t i = pairs.size(); i-- > 0;) {
            const Pair& p = pairs[i];
            alphas[i] = p.rho * dot(p.s, d);
            axpy(d, -alphas[i], p.y);
        }
        if (!pairs.empty()) {
            const Pair& last = pairs.back();
            const double gamma = dot(last.s, last.y) / dot(last.y, last.y);
            for (double& v : d) v *= gamma;
        }
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            const Pair& p = pairs[i];
            const double beta = p.rho * dot(p.y, d);
            axpy(d, alphas[i] - beta, p.s);
        }

        double dphi0 = dot(g, d);
        if (dphi0 >= 0.0) {
            // Not a descent direction; drop history and fall back to steepest.
            pairs.clear();
            d = g;
            for (double& v : d) v = -v;
            dphi0 = dot(g, d);
            if (dphi0 >= 0.0) {
                result.stop_reason = StopReason::early_stop;
                break;
            }
        }

        const double alpha_init =
            (iter == 0 && pairs.empty()) ? std::min(1.0, 1.0 / std::max(1e-12, inf_norm(g))) : 1.0;
        const LineSearchResult ls = strong_wolfe(objective, result.x, d, f, dphi0, alpha_init, xt, gt);
        if (!ls.ok) {
            result.stop_reason = StopReason::line_search_failure;
            break;
        }

        std::vector<double> s(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = xt[i] - result.x[i];
            y[i] = gt[i] - g[i];
        }
        const double sy = dot(s, y);
        if (sy > 1e-10 * std::sqrt(dot(s, s)) * std::sqrt(dot(y, y))) {
            pairs.push_back({std::move(s), std::move(y), 1.0 / sy});
            if (static_cast<int>(pairs.size()) > options.memory) pairs.pop_front();
        }

        result.x.swap(xt);
        g.swap(gt);
        f = ls.f;
        result.loss_trace.push_back(f);
        result.iterations = iter + 1;

        stopper.record(f);
        if (stopper.should_stop()) {
            result.stop_reason = StopReason::early_stop;
            break;
        }
    }
    return result;
}

MinimizeResult adam_minimize(const Objective& objective, std::vector<double> x0,
                             const MinimizeOptions& options, double step) {
    if (options.max_iterations < 1) throw std::invalid_argument("adam_minimize: max_iterations >= 1");
    const std::size_t n = x0.size();
    MinimizeResult result;
    result.x = std::move(x0);

    std::vector<double> g(n), m(n, 0.0), v(n, 0.0);
    if (options.epoch) options.epoch(0);
    double f = objective(result.x, g);
    if (!std::isfinite(f)) throw std::invalid_argument("adam_minimize: objective not finite at x0");
    result.loss_trace.push_back(f);

    EarlyStopTracker stopper(options.early_stop);
    stopper.record(f);

    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    double b1t = 1.0, b2t = 1.0;
    result.stop_reason = StopReason::max_iter;

    for (int iter = 0; iter < options.max_iterations; ++iter) {
        if (options.epoch && iter > 0 && options.epoch(iter)) f = objective(result.x, g);
        b1t *= b1;
        b2t *= b2;
        for (std::size_t i = 0; i < n; ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            const double mhat = m[i] / (1.0 - b1t);
            const double vhat = v[i] / (1.0 - b2t);
            result.x[i] -= step * mhat / (std::sqrt(vhat) + eps);
        }
        f = objective(result.x, g);
        if (!std::isfinite(f)) throw std::runtime_error("adam_minimize: objective became non-finite");
        result.loss_trace.push_back(f);
        result.iterations = iter + 1;

        stopper.record(f);
        if (stopper.should_stop()) {
            result.stop_reason = StopReason::early_stop;
            break;
        }
    }
    return result;
}

}  // namespace wd
