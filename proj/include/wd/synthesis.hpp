#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "wd/distortion.hpp"
#include "wd/features.hpp"
#include "wd/grid.hpp"
#include "wd/lbfgs.hpp"
#include "wd/sigma_map.hpp"

namespace wd {

enum class PoiMode { automatic, center, grid };
enum class InitMode { uniform_noise, provided };
enum class OptimizerKind { lbfgs, adam_fallback };

struct SynthesisConfig {
    int max_iterations = 4000;
    OptimizerKind optimizer = OptimizerKind::lbfgs;
    int lbfgs_memory = 10;
    EarlyStop early_stop;  // window 200, rel 1e-4
    InitMode init = InitMode::uniform_noise;
    std::uint64_t init_seed = 11;
    ImageGrid init_image;  // when init == provided
    Backend backend = Backend::diag;
    FeatureStackSpec features;
    bool use_default_multipliers = true;
    Multipliers multipliers;
    PoiMode poi_mode = PoiMode::automatic;
    int poi_random = 25;
    int poi_sets = 20;
    std::uint64_t poi_seed = 7;
    std::uint64_t rotate_seed = 99;
    double tail_mass_bound = 1e-9;
};

struct SynthesisTrace {
    std::vector<double> loss;
    StopReason stop_reason = StopReason::max_iter;
    double wall_seconds = 0.0;
    ImageGrid final_image;  // unclamped optimizer state
};

// Precomputed reference artifacts (banks, plan, per-point kernels and pooled
// reference moments) plus the loss/gradient evaluation against them. The
// gradient is the exact reverse-mode derivative through conv banks, the
// rectifier (subgradient 0 at 0), average pooling, pooled moments and the
// diagonal proxy (sqrt-variance derivative floored at V = 1e-12).
class SynthesisObjective {
public:
    SynthesisObjective(const ImageGrid& reference, const SigmaMap& map, const SynthesisConfig& cfg);

    // pixels laid out like reference.values(); grad may be null.
    double evaluate(const std::vector<double>& pixels, std::vector<double>* grad) const;

    void set_active_set(int set_index);
    int active_set() const { return active_set_; }
    int num_sets() const { return plan_.num_sets(); }

    const ImageGrid& reference() const { return reference_; }
    const PoiPlan& plan() const { return plan_; }
    const SynthesisConfig& config() const { return cfg_; }
    const std::vector<KernelBank>& banks() const { return banks_; }

private:
    struct PointData {
        PoolingKernel2D kernel;
        std::vector<double> ref_mean;
        std::vector<double> ref_sqrt_var;
        double weight = 1.0;  // M_sigma * M_layer
        bool delta = false;
    };
    struct LayerData {
        int layer_id = 0;
        std::vector<PointData> fixed;
        std::vector<std::vector<PointData>> rotating;
    };

    PointData make_point(const FeatureLayer& ref_layer, const PoiPoint& p, double m_layer) const;

    ImageGrid reference_;
    SynthesisConfig cfg_;
    std::vector<KernelBank> banks_;
    PoiPlan plan_;
    Multipliers mult_;
    std::vector<LayerData> layers_;
    int active_set_ = 0;
};

double loss_and_gradient(const SynthesisObjective& objective, const ImageGrid& pixels,
                         ImageGrid* gradient);

// Minimizes the distortion to the reference from the configured init; returns
// the [0,1]-clamped image and the optimization trace.
std::pair<ImageGrid, SynthesisTrace> synthesize(const ImageGrid& reference, const SigmaMap& map,
                                                const SynthesisConfig& cfg);

struct ProgressionEntry {
    double sigma = 0.0;
    ImageGrid image;
    double pixel_mse = 0.0;
    double final_loss = 0.0;
};

// One synthesis per sigma on the sparse even grid of points of interest.
std::vector<ProgressionEntry> sigma_progression(const ImageGrid& reference,
                                                const std::vector<double>& sigmas,
                                                SynthesisConfig cfg);

// Masked MSE over the high-saliency pixels plus gram_weight times the summed
// squared Frobenius distance between per-layer feature Gram matrices.
std::pair<ImageGrid, SynthesisTrace> baseline_mse_plus_gram(const ImageGrid& reference,
                                                            const std::vector<std::uint8_t>& saliency_mask,
                                                            double gram_weight,
                                                            const SynthesisConfig& cfg);

// Baseline loss/gradient, exposed for gradient checks.
double baseline_loss_and_gradient(const ImageGrid& reference,
                                  const std::vector<std::uint8_t>& saliency_mask, double gram_weight,
                                  const std::vector<KernelBank>& banks, const FeatureStackSpec& spec,
                                  const std::vector<double>& pixels, std::vector<double>* grad);

}  // namespace wd
