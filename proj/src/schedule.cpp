#include "gtf/schedule.hpp"

#include <cmath>
#include <cstdint>
#include <string>

#include "gtf/errors.hpp"

namespace gtf {

double NoiseSchedule::alpha_bar_at(int t) const {
  if (t < 0 || t > T) {
    throw OutOfRange("timestep " + std::to_string(t) + " outside [0, " + std::to_string(T) + "]");
  }
  return alpha_bar[t];
}

double NoiseSchedule::sigma_at(int t) const {
  if (t < 0 || t > T) {
    throw OutOfRange("timestep " + std::to_string(t) + " outside [0, " + std::to_string(T) + "]");
  }
  return sigma[t];
}

NoiseSchedule build_schedule(int T, double beta_start, double beta_end) {
  if (T < 2) {
    throw InvalidRange("schedule requires T >= 2, got " + std::to_string(T));
  }
  if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0)) {
    throw InvalidRange("betas must satisfy 0 < beta_start <= beta_end < 1");
  }
  NoiseSchedule s;
  s.T = T;
  s.beta.resize(T);
  s.alpha_bar.resize(T + 1);
  s.sigma.resize(T + 1);
  s.alpha_bar[0] = 1.0;
  s.sigma[0] = 0.0;
  for (int i = 0; i < T; ++i) {
    s.beta[i] = beta_start + (beta_end - beta_start) * static_cast<double>(i) / (T - 1);
    s.alpha_bar[i + 1] = s.alpha_bar[i] * (1.0 - s.beta[i]);
    s.sigma[i + 1] = std::sqrt(1.0 - s.alpha_bar[i + 1]);
  }
  return s;
}

NoiseVector forward_noise(const NoiseVector& x0, int t, const NoiseVector& eps,
                          const NoiseSchedule& sched) {
  if (x0.size() != eps.size()) {
    throw DimensionMismatch("x0 and eps dimensions differ");
  }
  const double a = sched.alpha_bar_at(t);
  return std::sqrt(a) * x0 + std::sqrt(1.0 - a) * eps;
}

std::vector<int> select_timesteps(int T, int S) {
  if (S < 1 || S > T) {
    throw InvalidRange("inference steps must satisfy 1 <= S <= T");
  }
  std::vector<int> steps(S);
  if (S == 1) {
    steps[0] = T - 1;
    return steps;
  }
  // floor((T-1) * (1 - j/(S-1))) computed in integer arithmetic; the
  // floating-point form slips below whole numbers and duplicates steps.
  for (int j = 0; j < S; ++j) {
    const std::int64_t num =
        static_cast<std::int64_t>(T - 1) * static_cast<std::int64_t>(S - 1 - j);
    steps[j] = static_cast<int>(num / (S - 1));
  }
  return steps;
}

}  // namespace gtf
