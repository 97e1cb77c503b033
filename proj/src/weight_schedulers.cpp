#include "gtf/weight_schedulers.hpp"

#include <cmath>
#include <numbers>

#include "gtf/errors.hpp"

namespace gtf {

SchedulerSpec make_scheduler(SchedulerKind kind, double w0, int T) {
  if (T < 2) {
    throw InvalidRange("scheduler requires T >= 2, got " + std::to_string(T));
  }
  if (!(w0 >= 0.0) || !std::isfinite(w0)) {
    throw InvalidRange("scheduler base weight must be finite and non-negative");
  }
  return SchedulerSpec{kind, w0, T};
}

double evaluate(const SchedulerSpec& spec, int t) {
  if (t < 0 || t > spec.T) {
    throw OutOfRange("scheduler timestep " + std::to_string(t) + " outside [0, " +
                     std::to_string(spec.T) + "]");
  }
  const double u = static_cast<double>(t) / spec.T;
  switch (spec.kind) {
    case SchedulerKind::Static:
      return spec.w0;
    case SchedulerKind::Linear:
      return spec.w0 * 2.0 * (1.0 - u);
    case SchedulerKind::Cosine:
      return spec.w0 * (std::cos(std::numbers::pi * u) + 1.0);
    case SchedulerKind::InverseLinear:
      return spec.w0 * 2.0 * u;
    case SchedulerKind::Sine:
      return spec.w0 * (std::sin(std::numbers::pi * u - std::numbers::pi / 2.0) + 1.0);
  }
  throw InvalidRange("unhandled scheduler kind");
}

double discrete_mass(const SchedulerSpec& spec) {
  double sum = 0.0;
  for (int t = 0; t < spec.T; ++t) {
    sum += evaluate(spec, t);
  }
  return sum;
}

const char* scheduler_name(SchedulerKind kind) {
  switch (kind) {
    case SchedulerKind::Static:
      return "static";
    case SchedulerKind::Linear:
      return "linear";
    case SchedulerKind::Cosine:
      return "cosine";
    case SchedulerKind::InverseLinear:
      return "inverse_linear";
    case SchedulerKind::Sine:
      return "sine";
  }
  return "unknown";
}

SchedulerKind scheduler_from_name(const std::string& name) {
  if (name == "static") return SchedulerKind::Static;
  if (name == "linear") return SchedulerKind::Linear;
  if (name == "cosine") return SchedulerKind::Cosine;
  if (name == "inverse_linear") return SchedulerKind::InverseLinear;
  if (name == "sine") return SchedulerKind::Sine;
  throw ValidationError("unknown scheduler \"" + name + "\"");
}

}  // namespace gtf
