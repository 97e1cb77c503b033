#pragma once

#include <Eigen/Dense>
#include <vector>

#include "gtf/types.hpp"

namespace gtf {

// Discrete diffusion coefficients. alpha_bar has T+1 entries with
// alpha_bar[0] = 1 and alpha_bar[t] the product of (1 - beta) over the first
// t betas; sigma(t) = sqrt(1 - alpha_bar[t]).
struct NoiseSchedule {
  int T = 0;
  Eigen::VectorXd beta;       // length T
  Eigen::VectorXd alpha_bar;  // length T+1
  Eigen::VectorXd sigma;      // length T+1, sigma[0] = 0

  double alpha_bar_at(int t) const;
  double sigma_at(int t) const;
};

NoiseSchedule build_schedule(int T, double beta_start, double beta_end);

NoiseVector forward_noise(const NoiseVector& x0, int t, const NoiseVector& eps,
                          const NoiseSchedule& sched);

// Strictly decreasing code-step indices from T-1 toward 0, floor-spaced; the
// state entering index i carries noise level alpha_bar[i + 1].
std::vector<int> select_timesteps(int T, int S);

}  // namespace gtf
