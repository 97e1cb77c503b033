#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"

#include "gtf/errors.hpp"
#include "gtf/evaluation.hpp"
#include "gtf/experiment.hpp"
#include "gtf/gaussian_mixture.hpp"
#include "gtf/sampler.hpp"
#include "gtf/schedule.hpp"

using gtf::ConditionId;
using nlohmann::json;

namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

int count_lines(const std::string& text) {
  int lines = 0;
  for (char ch : text) {
    if (ch == '\n') ++lines;
  }
  return lines;
}

fs::path fresh_dir(const std::string& leaf) {
  const fs::path dir = fs::temp_directory_path() / leaf;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

double histogram_entropy(const gtf::Grid2D& g) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < g.prob.size(); ++i) {
    const double p = g.prob(i);
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

}  // namespace

TEST_SUITE("cli_runner") {

TEST_CASE("an empty config materializes every default") {
  const auto cfg = gtf::load_config(json{{"world", "demo"}});

  CHECK(cfg.T == 1000);
  CHECK(cfg.beta_start == 1e-4);
  CHECK(cfg.beta_end == 0.02);
  CHECK(cfg.sampler.method == gtf::SamplerMethod::DDIM);
  CHECK(cfg.sampler.steps == 50);
  CHECK(cfg.sampler.ddim_eta == 0.0);
  CHECK(cfg.sampler.seed == 0);
  CHECK(cfg.n_samples == 20000);
  CHECK(cfg.mode == gtf::ManipulationMode::Addition);
  CHECK(cfg.composition == gtf::CompositionRule::Projection);
  CHECK(cfg.src == ConditionId{0});
  CHECK(cfg.tgt == ConditionId{1});
  CHECK(cfg.w1 == 1.0);
  CHECK(cfg.w2_base == 0.5);
  CHECK(cfg.scheduler == gtf::SchedulerKind::Cosine);
  CHECK(cfg.cfg_scale == 7.5);
  CHECK(cfg.sweep_axis.empty());
  CHECK(cfg.output_dir == "gtf_out");
  CHECK(cfg.train_cfg.epochs == 30);
  CHECK(cfg.train_cfg.batch_size == 128);
  CHECK(cfg.train_cfg.learning_rate == 1e-3);
  CHECK(cfg.train_cfg.samples_per_condition == 4000);
  CHECK(cfg.world.names == std::vector<std::string>{"c1", "c2", "joint"});

  // The echo re-parses to itself: every default is materialized.
  const auto round = gtf::load_config(cfg.echo);
  CHECK(round.echo == cfg.echo);
}

TEST_CASE("config errors name the offending field") {
  try {
    gtf::load_config(json{{"world", "demo"}, {"guidance", {{"scheduler", "quadratic"}}}});
    FAIL("expected a validation error");
  } catch (const gtf::ValidationError& e) {
    CHECK(std::string(e.what()).find("scheduler") != std::string::npos);
  }

  CHECK_THROWS_AS(gtf::load_config(json{{"world", "demo"}, {"turbo", true}}),
                  gtf::ValidationError);
  CHECK_THROWS_AS(gtf::load_config(json{{"world", "demo"}, {"sampler", {{"foo", 1}}}}),
                  gtf::ValidationError);
  CHECK_THROWS_AS(gtf::load_config(json::array()), gtf::ValidationError);
}

TEST_CASE("numeric and enum fields are validated") {
  const auto with = [](const char* block, json patch) {
    json doc{{"world", "demo"}};
    doc[block] = std::move(patch);
    return doc;
  };

  CHECK_THROWS_AS(gtf::load_config(with("sampler", {{"steps", 0}})), gtf::ValidationError);
  CHECK_THROWS_AS(gtf::load_config(with("sampler", {{"steps", 2000}})), gtf::ValidationError);
  CHECK_THROWS_AS(gtf::load_config(with("sampler", {{"eta", -1.0}})), gtf::ValidationError);
  CHECK_THROWS_AS(gtf::load_config(with("sampler", {{"n_samples", 0}})), gtf::ValidationError);
  CHECK_THROWS_AS(gtf::load_config(with("sampler", {{"method", "euler"}})), gtf::ValidationError);
  CHECK_THROWS_AS(gtf::load_config(with("sampler", {{"seed", -4}})), gtf::ValidationError);
  CHECK_THROWS_AS(gtf::load_config(with("schedule", {{"T", 1}})), gtf::ValidationError);
  CHECK_THROWS_AS(gtf::load_config(with("schedule", {{"beta_end", 1.0}})), gtf::ValidationError);
  CHECK_THROWS_AS(gtf::load_config(with("guidance", {{"mode", "subtract"}})),
                  gtf::ValidationError);
  CHECK_THROWS_AS(gtf::load_config(with("guidance", {{"composition", "mixture"}})),
                  gtf::ValidationError);
  CHECK_THROWS_AS(gtf::load_config(with("guidance", {{"w2_base", -0.5}})), gtf::ValidationError);
  CHECK_THROWS_AS(gtf::load_config(with("guidance", {{"cfg_scale", 0.0}})), gtf::ValidationError);
  CHECK_THROWS_AS(gtf::load_config(with("guidance", {{"src", "nope"}})), gtf::ValidationError);
  CHECK_THROWS_AS(gtf::load_config(with("train", {{"epochs", 0}})), gtf::ValidationError);
  CHECK_THROWS_AS(gtf::load_config(with("output", "")), gtf::ValidationError);
}

TEST_CASE("explicit worlds parse, normalize, and resolve names") {
  const json doc = json::parse(R"({
    "world": {
      "prior": [{"mean": [0, 0], "variance": [4, 4]}],
      "conditions": [
        {"name": "a", "components": [
          {"weight": 2, "mean": [-1, 0], "variance": [1, 1]},
          {"weight": 6, "mean": [1, 0], "variance": [1, 1]}
        ]},
        {"name": "b", "components": [{"mean": [2, 0], "variance": [0.5, 0.5]}]}
      ]
    },
    "guidance": {"src": "b", "tgt": "a"}
  })");
  const auto cfg = gtf::load_config(doc);
  CHECK(cfg.world.names == std::vector<std::string>{"a", "b"});
  CHECK(cfg.src == ConditionId{1});
  CHECK(cfg.tgt == ConditionId{0});
  const auto& mixed = cfg.world.conditionals.at(ConditionId{0});
  CHECK(mixed.components[0].weight == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(mixed.components[1].weight == doctest::Approx(0.75).epsilon(1e-12));

  json dup = doc;
  dup["world"]["conditions"][1]["name"] = "a";
  CHECK_THROWS_AS(gtf::load_config(dup), gtf::ValidationError);

  json skewed = doc;
  skewed["world"]["conditions"][1]["components"][0]["mean"] = {2.0};
  skewed["world"]["conditions"][1]["components"][0]["variance"] = {0.5};
  CHECK_THROWS_AS(gtf::load_config(skewed), gtf::ValidationError);

  json lonely = doc;
  lonely["world"]["conditions"].erase(1);
  lonely.erase("guidance");
  CHECK_THROWS_AS(gtf::load_config(lonely), gtf::ValidationError);

  CHECK_THROWS_AS(gtf::load_config(json{{"world", "other"}}), gtf::ValidationError);
  CHECK_THROWS_AS(gtf::load_config(json{{"world", {{"demo", false}}}}), gtf::ValidationError);
  CHECK_THROWS_AS(
      gtf::load_config(json{{"world", {{"demo", true}, {"prior", json::array()}}}}),
      gtf::ValidationError);
}

TEST_CASE("overrides update both the config and its echo") {
  auto cfg = gtf::load_config(json{{"world", "demo"}});
  gtf::override_seed(cfg, 123);
  CHECK(cfg.sampler.seed == 123);
  CHECK(cfg.echo["sampler"]["seed"] == 123);

  gtf::override_output(cfg, "elsewhere");
  CHECK(cfg.output_dir == "elsewhere");
  CHECK(cfg.echo["output"] == "elsewhere");
  CHECK_THROWS_AS(gtf::override_output(cfg, ""), gtf::ValidationError);

  gtf::override_sweep(cfg, "w1", {"0.25", "1"});
  CHECK(cfg.sweep_axis == "w1");
  CHECK(cfg.echo["sweep"]["values"][0] == 0.25);
  CHECK_THROWS_AS(gtf::override_sweep(cfg, "w2", {"-1"}), gtf::ValidationError);
}

TEST_CASE("sweeps expand into ordered run points") {
  const auto cfg = gtf::load_config(json::parse(R"({
    "world": "demo",
    "sweep": {"axis": "w2", "values": [0, 0.05, 0.1]}
  })"));
  const auto points = gtf::expand_sweep(cfg, cfg.sweep_axis, cfg.sweep_values);
  REQUIRE(points.size() == 3);
  CHECK(points[0].run_id == "run000");
  CHECK(points[1].run_id == "run001");
  CHECK(points[2].run_id == "run002");
  CHECK(points[0].guidance.w2.w0 == 0.0);
  CHECK(points[1].guidance.w2.w0 == 0.05);
  CHECK(points[2].guidance.w2.w0 == 0.1);
  for (const auto& p : points) CHECK(p.guidance.w2.kind == gtf::SchedulerKind::Cosine);

  const auto single = gtf::expand_sweep(cfg, "", {});
  REQUIRE(single.size() == 1);
  CHECK(single[0].run_id == "run000");
  CHECK(single[0].guidance.w2.w0 == 0.5);

  const auto all = gtf::expand_sweep(cfg, "scheduler", {"all"});
  REQUIRE(all.size() == 5);
  CHECK(all[0].guidance.w2.kind == gtf::SchedulerKind::Static);
  CHECK(all[1].guidance.w2.kind == gtf::SchedulerKind::Linear);
  CHECK(all[2].guidance.w2.kind == gtf::SchedulerKind::Cosine);
  CHECK(all[3].guidance.w2.kind == gtf::SchedulerKind::InverseLinear);
  CHECK(all[4].guidance.w2.kind == gtf::SchedulerKind::Sine);
  for (const auto& p : all) CHECK(p.guidance.w2.w0 == 0.5);

  CHECK_THROWS_AS(gtf::expand_sweep(cfg, "turbo", {"1"}), gtf::ValidationError);
  CHECK_THROWS_AS(gtf::expand_sweep(cfg, "w2", {}), gtf::ValidationError);
  CHECK_THROWS_AS(gtf::load_config(json::parse(
                      R"({"world": "demo", "sweep": {"axis": "cfg", "values": [0]}})")),
                  gtf::ValidationError);
}

TEST_CASE("run bundles write the full artifact set") {
  const fs::path dir = fresh_dir("gtf_bundle_test");
  auto cfg = gtf::load_config(json::parse(R"({
    "world": "demo",
    "sampler": {"steps": 5, "seed": 9, "n_samples": 400}
  })"));
  gtf::override_output(cfg, dir.string());
  gtf::run_bundle(cfg, false);

  const std::string metrics = slurp(dir / "metrics.csv");
  const std::string header =
      "run_id,mode,w1,w2_base,scheduler,cfg,steps,grid_kl,sliced_w,mean_err,cov_err,"
      "clamped_count\n";
  CHECK(metrics.substr(0, header.size()) == header);
  CHECK(metrics.substr(header.size(), 31) == "run000,addition,1,0.5,cosine,7.");
  CHECK(count_lines(metrics) == 2);

  const std::string samples = slurp(dir / "samples_run000.csv");
  CHECK(samples.substr(0, 6) == "x0,x1\n");
  CHECK(count_lines(samples) == 401);

  const std::string pgm = slurp(dir / "heatmap_run000.pgm");
  CHECK(pgm.substr(0, 13) == "P5\n64 64\n255\n");
  CHECK(pgm.size() == 13 + 64 * 64);

  const json manifest = json::parse(slurp(dir / "manifest.json"));
  CHECK(manifest["version"] == "1.0.0");
  CHECK(manifest["status"] == "complete");
  CHECK(manifest["config"] == cfg.echo);
  REQUIRE(manifest["runs"].size() == 1);
  CHECK(manifest["runs"][0]["run_id"] == "run000");
  CHECK(manifest["runs"][0]["samples"] == "samples_run000.csv");
  CHECK(manifest["runs"][0]["heatmap"] == "heatmap_run000.pgm");
  CHECK(manifest["runs"][0]["grid_kl"].is_number());
  CHECK(manifest["runs"][0]["clamped_count"].is_number_integer());

  // The manifest's embedded config is itself loadable and echoes unchanged.
  const auto reparsed = gtf::load_config(manifest["config"]);
  CHECK(reparsed.echo == manifest["config"]);

  fs::remove_all(dir);
}

TEST_CASE("ranked sweeps add a rank column ordered by grid KL") {
  const fs::path dir = fresh_dir("gtf_rank_test");
  auto cfg = gtf::load_config(json::parse(R"({
    "world": "demo",
    "sampler": {"steps": 5, "seed": 3, "n_samples": 300},
    "sweep": {"axis": "w1", "values": [1.0, 4.0]}
  })"));
  gtf::override_output(cfg, dir.string());
  gtf::run_bundle(cfg, true);

  std::istringstream metrics(slurp(dir / "metrics.csv"));
  std::string line;
  std::getline(metrics, line);
  CHECK(line ==
        "run_id,mode,w1,w2_base,scheduler,cfg,steps,grid_kl,sliced_w,mean_err,cov_err,"
        "clamped_count,rank");

  std::vector<double> kl;
  std::vector<int> rank;
  while (std::getline(metrics, line)) {
    std::vector<std::string> cells;
    std::istringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    REQUIRE(cells.size() == 13);
    kl.push_back(std::stod(cells[7]));
    rank.push_back(std::stoi(cells[12]));
  }
  REQUIRE(kl.size() == 2);
  CHECK(((rank[0] == 1 && rank[1] == 2) || (rank[0] == 2 && rank[1] == 1)));
  CHECK((kl[rank[0] == 1 ? 0 : 1] <= kl[rank[0] == 1 ? 1 : 0]));

  fs::remove_all(dir);
}

TEST_CASE("identical configs produce byte-identical bundles") {
  const fs::path dir_a = fresh_dir("gtf_det_a");
  const fs::path dir_b = fresh_dir("gtf_det_b");
  const json doc = json::parse(R"({
    "world": "demo",
    "sampler": {"steps": 6, "seed": 21, "n_samples": 500},
    "guidance": {"mode": "removal", "src": "joint", "tgt": "c2"}
  })");

  auto cfg_a = gtf::load_config(doc);
  gtf::override_output(cfg_a, dir_a.string());
  gtf::run_bundle(cfg_a, false);

  auto cfg_b = gtf::load_config(doc);
  gtf::override_output(cfg_b, dir_b.string());
  gtf::run_bundle(cfg_b, false);

  CHECK(slurp(dir_a / "metrics.csv") == slurp(dir_b / "metrics.csv"));
  CHECK(slurp(dir_a / "samples_run000.csv") == slurp(dir_b / "samples_run000.csv"));
  CHECK(slurp(dir_a / "heatmap_run000.pgm") == slurp(dir_b / "heatmap_run000.pgm"));

  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
}

TEST_CASE("raising w2 drains mass from the removed component") {
  const auto world = gtf::demo_world();
  const auto sched = gtf::build_schedule(1000, 1e-4, 0.02);
  const gtf::AnalyticDenoiser den(world, sched);

  gtf::SamplerConfig sc;
  sc.steps = 20;
  sc.seed = 4;
  Eigen::Vector2d removed(2, 0);

  const auto residual_mass = [&](double w0) {
    gtf::GuidanceConfig g;
    g.mode = gtf::ManipulationMode::Removal;
    g.w2 = gtf::make_scheduler(gtf::SchedulerKind::Cosine, w0, 1000);
    const Eigen::MatrixXd pts =
        gtf::sample(den, sched, sc, g, ConditionId{2}, ConditionId{1}, 4000);
    return gtf::mass_within(pts, removed, std::sqrt(2.0));
  };

  CHECK(residual_mass(0.0) > residual_mass(0.05));
}

TEST_CASE("raising w1 sharpens the sampled histogram") {
  const auto world = gtf::demo_world();
  const auto sched = gtf::build_schedule(1000, 1e-4, 0.02);
  const gtf::AnalyticDenoiser den(world, sched);

  gtf::SamplerConfig sc;
  sc.steps = 20;
  sc.seed = 13;

  const auto entropy_at = [&](double w1) {
    gtf::GuidanceConfig g;
    g.w1 = w1;
    g.w2 = gtf::make_scheduler(gtf::SchedulerKind::Static, 0.0, 1000);
    g.cfg_scale = 2.0;
    const Eigen::MatrixXd pts =
        gtf::sample(den, sched, sc, g, ConditionId{0}, ConditionId{1}, 4000);
    return histogram_entropy(gtf::histogram_grid(pts, gtf::GridSpec{}));
  };

  const double soft = entropy_at(0.25);
  const double mid = entropy_at(1.0);
  const double sharp = entropy_at(4.0);
  CHECK(soft > mid);
  CHECK(mid > sharp);
}

TEST_CASE("the built-in check battery passes both profiles") {
  CHECK(gtf::check_command("default") == 0);
  CHECK(gtf::check_command("strict") == 0);
  CHECK_THROWS_AS(gtf::check_command("loose"), gtf::ValidationError);
}

TEST_CASE("config files surface IO and parse failures") {
  CHECK_THROWS_AS(gtf::load_config_file("/nonexistent/gtf.json"), gtf::Error);

  const fs::path dir = fresh_dir("gtf_cfg_test");
  const fs::path bad = dir / "bad.json";
  {
    std::ofstream out(bad);
    out << "{ not json";
  }
  CHECK_THROWS_AS(gtf::load_config_file(bad.string()), gtf::ParseError);
  fs::remove_all(dir);
}

}  // TEST_SUITE
