#pragma once

#include <functional>
#include <vector>

namespace wd {

enum class StopReason { max_iter, early_stop, line_search_failure };

const char* stop_reason_name(StopReason reason);

struct EarlyStop {
    int window = 200;
    double rel_improvement = 1e-4;
};

struct MinimizeOptions {
    int max_iterations = 4000;
    int memory = 10;
    EarlyStop early_stop;
    // Called at the start of each outer iteration. Return true if the
    // objective changed (f and g at the current point are then re-evaluated);
    // line-search probes within the iteration see a fixed objective.
    std::function<bool(int iteration)> epoch;
};

// Fills grad (same length as x) and returns the loss.
using Objective = std::function<double(const std::vector<double>& x, std::vector<double>& grad)>;

struct MinimizeResult {
    std::vector<double> x;
    std::vector<double> loss_trace;  // f at x0, then after each iteration
    StopReason stop_reason = StopReason::max_iter;
    int iterations = 0;
};

// Limited-memory quasi-Newton with a strong-Wolfe line search. Accepted steps
// never increase the loss (for a fixed objective).
MinimizeResult lbfgs_minimize(const Objective& objective, std::vector<double> x0,
                              const MinimizeOptions& options);

// Plain Adam; used directly or as the fallback after a line-search failure.
MinimizeResult adam_minimize(const Objective& objective, std::vector<double> x0,
                             const MinimizeOptions& options, double step = 0.01);

}  // namespace wd
