#pragma once

#include "wd/distortion.hpp"
#include "wd/features.hpp"
#include "wd/grid.hpp"

// Single-threaded reference implementations of the parallel kernels. They
// perform the same per-cell arithmetic in the same order, so results must be
// bit-identical to the OpenMP paths; tests assert exact equality and the
// bench subcommand compares timings.
namespace wd::ref {

FeatureLayer conv_bank_apply(const FeatureLayer& input, const KernelBank& bank);

PooledMoments pooled_moments(const FeatureLayer& layer, const PoolingKernel2D& kernel);

DistortionReport total_distortion(const FeatureStack& ref, const FeatureStack& rec,
                                  const PoiPlan& plan, const Multipliers& mult,
                                  const DistortionParams& params, int active_set = 0);

}  // namespace wd::ref
