#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "gtf/guidance.hpp"
#include "gtf/schedule.hpp"

namespace gtf {

enum class SamplerMethod { DDPM, DDIM };

struct SamplerConfig {
  int steps = 50;
  SamplerMethod method = SamplerMethod::DDIM;
  double ddim_eta = 0.0;
  std::uint64_t seed = 0;
};

// Number of worker threads: hardware concurrency capped by GTF_THREADS.
int thread_budget();

// Runs S reverse steps from x_T ~ N(0, I), substituting guided_epsilon for
// the model noise at every step. Returns one sample per row. Bitwise
// deterministic in (seed, configs): chains own private RNG streams derived
// from (seed, chain index) and are processed in fixed-size blocks, so the
// result is independent of the thread count.
Eigen::MatrixXd sample(const ConditionedDenoiser& denoiser, const NoiseSchedule& sched,
                       const SamplerConfig& sampler_cfg, const GuidanceConfig& guidance_cfg,
                       ConditionId src, ConditionId tgt, int n);

}  // namespace gtf
