#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "gtf/evaluation.hpp"
#include "gtf/gaussian_mixture.hpp"
#include "gtf/guidance.hpp"
#include "gtf/mlp.hpp"
#include "gtf/sampler.hpp"

namespace gtf {

// One fully validated experiment family: a world, a schedule, sampler and
// guidance settings, and an optional sweep. `echo` holds the normalized
// config document (all defaults materialized); re-parsing it reproduces this
// config exactly.
struct ExperimentConfig {
  AnalyticWorld<double> world;
  std::string checkpoint_path;  // when set, sampling uses the loaded network

  int T = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;

  SamplerConfig sampler;
  int n_samples = 20000;

  ManipulationMode mode = ManipulationMode::Addition;
  CompositionRule composition = CompositionRule::Projection;
  double w1 = 1.0;
  double w2_base = 0.5;
  SchedulerKind scheduler = SchedulerKind::Cosine;
  double cfg_scale = 7.5;
  ConditionId src{0};
  ConditionId tgt{1};

  std::string sweep_axis;                 // empty: single run
  std::vector<std::string> sweep_values;  // numeric tokens, or scheduler names

  std::string output_dir = "gtf_out";
  TrainConfig train_cfg;

  nlohmann::json echo;

  GuidanceConfig guidance() const;
};

ExperimentConfig load_config(const nlohmann::json& doc);
ExperimentConfig load_config_file(const std::string& path);

void override_seed(ExperimentConfig& cfg, std::uint64_t seed);
void override_output(ExperimentConfig& cfg, const std::string& dir);
void override_sweep(ExperimentConfig& cfg, const std::string& axis,
                    const std::vector<std::string>& values);

struct RunPoint {
  std::string run_id;
  GuidanceConfig guidance;
};

// Expands the sweep into per-run guidance configs; the scheduler axis value
// "all" expands to the five scheduler kinds.
std::vector<RunPoint> expand_sweep(const ExperimentConfig& cfg, const std::string& axis,
                                   const std::vector<std::string>& values);

// Executes every sweep point and writes the artifact bundle: per-run sample
// CSVs and heatmaps, one metrics.csv (with a grid_kl rank column when
// `ranked`), and manifest.json.
void run_bundle(const ExperimentConfig& cfg, bool ranked);

// Trains the configured network on the config's world and saves a checkpoint.
void train_command(const ExperimentConfig& cfg, const std::string& checkpoint_path);

// Runs the invariant/oracle battery on the analytic demo world; returns the
// number of failed checks. profile is "default" or "strict".
int check_command(const std::string& profile);

}  // namespace gtf
