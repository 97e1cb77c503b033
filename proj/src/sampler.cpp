#include "gtf/sampler.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

#include "gtf/errors.hpp"
#include "gtf/rng.hpp"

namespace gtf {
namespace {

// Chains are striped into fixed blocks so the set of RNG draws per chain is
// identical no matter how blocks are assigned to threads.
constexpr int kChainBlock = 1024;

struct StepPlan {
  int t = 0;            // timestep handed to the denoiser and the scheduler
  double a_now = 0.0;   // alpha_bar at the current state
  double a_next = 0.0;  // alpha_bar after the transition
};

std::vector<StepPlan> plan_steps(const NoiseSchedule& sched, int steps) {
  const std::vector<int> seq = select_timesteps(sched.T, steps);
  std::vector<StepPlan> plan(seq.size());
  for (std::size_t j = 0; j < seq.size(); ++j) {
    plan[j].t = seq[j] + 1;
    plan[j].a_now = sched.alpha_bar_at(seq[j] + 1);
    plan[j].a_next = (j + 1 < seq.size()) ? sched.alpha_bar_at(seq[j + 1] + 1)
                                          : sched.alpha_bar_at(0);
  }
  return plan;
}

void run_block(const ConditionedDenoiser& denoiser, const std::vector<StepPlan>& plan,
               const SamplerConfig& sampler_cfg, const GuidanceConfig& guidance_cfg,
               ConditionId src, ConditionId tgt, Eigen::MatrixXd& out, int row0, int rows) {
  const int d = denoiser.dimension();
  const double eta = sampler_cfg.method == SamplerMethod::DDPM ? 1.0 : sampler_cfg.ddim_eta;

  std::vector<Rng> rng;
  rng.reserve(static_cast<std::size_t>(rows));
  for (int r = 0; r < rows; ++r) {
    rng.emplace_back(derive_stream_seed(sampler_cfg.seed, static_cast<std::uint64_t>(row0 + r)));
  }

  Eigen::MatrixXd x(rows, d);
  for (int r = 0; r < rows; ++r) {
    for (int k = 0; k < d; ++k) x(r, k) = rng[static_cast<std::size_t>(r)].normal();
  }

  for (const StepPlan& step : plan) {
    const Eigen::MatrixXd eps =
        guided_epsilon_batch(x, step.t, src, tgt, denoiser, guidance_cfg);

    const double a = step.a_now;
    const double ap = step.a_next;
    const double sigma_tilde =
        ap < 1.0 ? eta * std::sqrt((1.0 - ap) / (1.0 - a)) * std::sqrt(1.0 - a / ap) : 0.0;
    const double dir_coef = std::sqrt(std::max(0.0, 1.0 - ap - sigma_tilde * sigma_tilde));
    const double x0_coef = std::sqrt(ap);
    const double inv_sqrt_a = 1.0 / std::sqrt(a);
    const double noise_coef = std::sqrt(1.0 - a);

    for (int r = 0; r < rows; ++r) {
      Eigen::VectorXd x0_pred = (x.row(r).transpose() - noise_coef * eps.row(r).transpose()) * inv_sqrt_a;
      Eigen::VectorXd next = x0_coef * x0_pred + dir_coef * eps.row(r).transpose();
      if (sigma_tilde > 0.0) {
        for (int k = 0; k < d; ++k) next[k] += sigma_tilde * rng[static_cast<std::size_t>(r)].normal();
      }
      x.row(r) = next.transpose();
    }
  }

  out.middleRows(row0, rows) = x;
}

}  // namespace

int thread_budget() {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  if (const char* env = std::getenv("GTF_THREADS")) {
    int cap = 0;
    try {
      cap = std::stoi(env);
    } catch (const std::exception&) {
      throw ValidationError("GTF_THREADS must be a positive integer");
    }
    if (cap < 1) throw ValidationError("GTF_THREADS must be a positive integer");
    n = std::min(n, cap);
  }
  return n;
}

Eigen::MatrixXd sample(const ConditionedDenoiser& denoiser, const NoiseSchedule& sched,
                       const SamplerConfig& sampler_cfg, const GuidanceConfig& guidance_cfg,
                       ConditionId src, ConditionId tgt, int n) {
  if (n < 1) throw InvalidRange("sample: n must be >= 1");
  if (sampler_cfg.steps < 1 || sampler_cfg.steps > sched.T) {
    throw InvalidRange("sample: steps must be in [1, T]");
  }
  if (!(sampler_cfg.ddim_eta >= 0.0) || !std::isfinite(sampler_cfg.ddim_eta)) {
    throw InvalidRange("sample: ddim_eta must be finite and >= 0");
  }

  const std::vector<StepPlan> plan = plan_steps(sched, sampler_cfg.steps);
  Eigen::MatrixXd out(n, denoiser.dimension());

  const int blocks = (n + kChainBlock - 1) / kChainBlock;
  const int workers = std::min(thread_budget(), blocks);

  if (workers <= 1) {
    for (int b = 0; b < blocks; ++b) {
      const int row0 = b * kChainBlock;
      run_block(denoiser, plan, sampler_cfg, guidance_cfg, src, tgt, out, row0,
                std::min(kChainBlock, n - row0));
    }
    return out;
  }

  std::atomic<int> next_block{0};
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      try {
        for (int b = next_block.fetch_add(1); b < blocks && !failed.load();
             b = next_block.fetch_add(1)) {
          const int row0 = b * kChainBlock;
          run_block(denoiser, plan, sampler_cfg, guidance_cfg, src, tgt, out, row0,
                    std::min(kChainBlock, n - row0));
        }
      } catch (...) {
        if (!failed.exchange(true)) failure = std::current_exception();
      }
    });
  }
  for (std::thread& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace gtf
