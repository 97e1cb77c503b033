#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "gtf/errors.hpp"
#include "gtf/experiment.hpp"
#include "gtf/version.hpp"

int main(int argc, char** argv) {
  CLI::App app{"guidance-composition experiment harness"};
  app.set_version_flag("--version", std::string(gtf::kVersion));
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  CLI::App* run = app.add_subcommand("run", "sample with guided composition and write metrics");
  run->add_option("--config", config_path, "experiment config (JSON)")->required();
  run->add_option("--seed", seed, "override sampler seed");
  run->add_option("--out", out_dir, "override output directory");

  std::string axis;
  std::vector<std::string> values;
  CLI::App* ablate = app.add_subcommand("ablate", "sweep one guidance axis and rank by grid KL");
  ablate->add_option("--config", config_path, "experiment config (JSON)")->required();
  ablate->add_option("--axis", axis, "one of w1, w2, scheduler, cfg")->required();
  ablate->add_option("--values", values, "comma-separated value list")
      ->required()
      ->delimiter(',');

  std::string checkpoint_path;
  CLI::App* train = app.add_subcommand("train", "train the learned denoiser on the config world");
  train->add_option("--config", config_path, "experiment config (JSON)")->required();
  train->add_option("--checkpoint", checkpoint_path, "where to write the trained network")
      ->required();

  std::string profile = "default";
  CLI::App* check = app.add_subcommand("check", "run the analytic invariant/oracle battery");
  check->add_option("--tolerance-profile", profile, "default or strict")
      ->check(CLI::IsMember({"default", "strict"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      gtf::ExperimentConfig cfg = gtf::load_config_file(config_path);
      if (run->count("--seed") > 0) gtf::override_seed(cfg, seed);
      if (!out_dir.empty()) gtf::override_output(cfg, out_dir);
      gtf::run_bundle(cfg, false);
      std::cout << "wrote " << cfg.output_dir << "\n";
      return 0;
    }
    if (ablate->parsed()) {
      gtf::ExperimentConfig cfg = gtf::load_config_file(config_path);
      gtf::override_sweep(cfg, axis, values);
      if (gtf::expand_sweep(cfg, cfg.sweep_axis, cfg.sweep_values).size() < 2) {
        throw gtf::ValidationError("--values: ablate needs at least two values");
      }
      gtf::run_bundle(cfg, true);
      std::cout << "wrote " << cfg.output_dir << "\n";
      return 0;
    }
    if (train->parsed()) {
      const gtf::ExperimentConfig cfg = gtf::load_config_file(config_path);
      gtf::train_command(cfg, checkpoint_path);
      return 0;
    }
    if (check->parsed()) {
      return gtf::check_command(profile) == 0 ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
