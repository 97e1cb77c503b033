#pragma once

#include <string>

namespace gtf {

enum class SchedulerKind { Static, Linear, Cosine, InverseLinear, Sine };

// Time-varying weight for the target-semantics term. t is the diffusion
// timestep: t = T is the noisiest step, t = 0 the final denoised one.
struct SchedulerSpec {
  SchedulerKind kind = SchedulerKind::Cosine;
  double w0 = 1.0;
  int T = 1000;
};

SchedulerSpec make_scheduler(SchedulerKind kind, double w0, int T);

double evaluate(const SchedulerSpec& spec, int t);

// Left Riemann sum over t = 0..T-1; within 2/T relative of w0 * T for every
// kind (the continuous normalization all five formulas share).
double discrete_mass(const SchedulerSpec& spec);

const char* scheduler_name(SchedulerKind kind);
SchedulerKind scheduler_from_name(const std::string& name);

}  // namespace gtf
