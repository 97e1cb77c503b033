#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gtf/denoiser.hpp"
#include "gtf/gaussian_mixture.hpp"
#include "gtf/schedule.hpp"
#include "gtf/types.hpp"

namespace gtf {

enum class Activation { ReLU, SiLU };

struct MlpSpec {
  int data_dim = 2;
  int time_embed_dim = 16;       // even
  int condition_count = 3;       // one-hot gets one extra reserved slot for UNCONDITIONAL
  std::vector<int> hidden = {128, 128};
  Activation activation = Activation::SiLU;

  int condition_embed_dim() const { return condition_count + 1; }
  int input_dim() const { return data_dim + time_embed_dim + condition_embed_dim(); }
};

// Sinusoidal features: pairs [sin(t*w_k), cos(t*w_k)] with
// w_k = exp(-k*log(10000)/(dim/2)).
Eigen::VectorXd time_embedding(int t, int dim, int T);

// Fully-connected epsilon-prediction network over the concatenated
// [x, time embedding, condition one-hot] input. Hidden layers use the spec
// activation; the output layer is linear and zero-initialized, so a fresh
// network predicts exactly zero.
class Mlp final : public ConditionedDenoiser {
 public:
  Mlp(MlpSpec spec, int max_timestep, std::uint64_t init_seed);

  int dimension() const override { return spec_.data_dim; }
  NoiseVector predict(const NoiseVector& x, int t, ConditionId c) const override;
  Eigen::MatrixXd predict_batch(const Eigen::MatrixXd& x_rows, int t,
                                ConditionId c) const override;

  const MlpSpec& spec() const { return spec_; }
  int max_timestep() const { return max_timestep_; }
  std::size_t parameter_count() const;
  double get_parameter(std::size_t flat_index) const;
  void set_parameter(std::size_t flat_index, double value);

  // Declaration order: W0, b0, W1, b1, ... with row-major weight matrices.
  std::vector<Eigen::MatrixXd> W;
  std::vector<Eigen::VectorXd> b;
  std::vector<std::string> condition_names;

 private:
  MlpSpec spec_;
  int max_timestep_;
};

NoiseVector forward(const Mlp& net, const NoiseVector& x, int t, ConditionId c);

// One training batch: already-noised states with their timesteps, condition
// ids, and the noise targets.
struct TrainBatch {
  Eigen::MatrixXd x_t;
  std::vector<int> t;
  std::vector<ConditionId> c;
  Eigen::MatrixXd eps;
};

struct MlpGradients {
  std::vector<Eigen::MatrixXd> dW;
  std::vector<Eigen::VectorXd> db;
};

// Mean over the batch of the squared epsilon-prediction error.
double mlp_batch_loss(const Mlp& net, const TrainBatch& batch);
MlpGradients mlp_batch_gradients(const Mlp& net, const TrainBatch& batch,
                                 double* loss = nullptr);

struct TrainConfig {
  int epochs = 30;
  int batch_size = 128;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  int samples_per_condition = 4000;  // used when the dataset comes from a world
};

// Denoising-score-matching loop: (x0, c) drawn from the dataset, t uniform in
// [1, T], eps ~ N(0, I), with 10% of draws retargeted to UNCONDITIONAL. The
// per-epoch draw tape is derived from cfg.seed alone, so learning_rate = 0
// replays identical batches and yields a constant loss history. Returns the
// per-epoch mean loss.
std::vector<double> train(Mlp& net, const std::map<ConditionId, Eigen::MatrixXd>& data,
                          const NoiseSchedule& sched, const TrainConfig& cfg);

// Convenience overload: draws samples_per_condition points from each world
// conditional (deterministically from cfg.seed) and trains on those.
std::vector<double> train(Mlp& net, const AnalyticWorld<double>& world,
                          const NoiseSchedule& sched, const TrainConfig& cfg);

// Central-difference validation of the analytic gradients at the given flat
// parameter indices; returns the max relative error.
double gradient_check_params(Mlp& net, const TrainBatch& batch,
                             const std::vector<std::size_t>& flat_indices);

// Same check on n_params randomly chosen parameters (n_params >= 50).
double gradient_check(Mlp& net, const TrainBatch& batch, int n_params = 64,
                      std::uint64_t seed = 0);

void save_checkpoint(const Mlp& net, const std::string& path);
Mlp load_checkpoint(const std::string& path);

}  // namespace gtf
