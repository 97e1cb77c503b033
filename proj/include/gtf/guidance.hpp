#pragma once

#include "gtf/denoiser.hpp"
#include "gtf/noise_geometry.hpp"
#include "gtf/types.hpp"
#include "gtf/weight_schedulers.hpp"

namespace gtf {

// How the three noise predictions combine: Projection applies the
// geometric operators with weights and cfg_scale; Bayes returns the
// unweighted derivation-level compositions exactly.
enum class CompositionRule { Projection, Bayes };

struct GuidanceConfig {
  ManipulationMode mode = ManipulationMode::Addition;
  CompositionRule composition = CompositionRule::Projection;
  double w1 = 1.0;
  SchedulerSpec w2;  // evaluated at the true diffusion timestep of each step
  double cfg_scale = 7.5;
};

// Queries the denoiser exactly three times (unconditional, source, target)
// and assembles the guided noise prediction for this step.
NoiseVector guided_epsilon(const NoiseVector& x, int t, ConditionId src, ConditionId tgt,
                           const ConditionedDenoiser& denoiser, const GuidanceConfig& guidance);

// Batched equivalent over row-stacked states; three predict_batch queries.
Eigen::MatrixXd guided_epsilon_batch(const Eigen::MatrixXd& x_rows, int t, ConditionId src,
                                     ConditionId tgt, const ConditionedDenoiser& denoiser,
                                     const GuidanceConfig& guidance);

}  // namespace gtf
