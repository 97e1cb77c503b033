#include "gtf/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <iostream>
#include <limits>
#include <memory>
#include <numeric>
#include <utility>

#include "gtf/errors.hpp"
#include "gtf/schedule.hpp"
#include "gtf/version.hpp"

namespace fs = std::filesystem;

namespace gtf {
namespace {

constexpr std::uint64_t kRefStream = 0x4ef5ULL;
constexpr std::uint64_t kSlicedStream = 0x571cULL;

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string mode_name(ManipulationMode mode) {
  return mode == ManipulationMode::Addition ? "addition" : "removal";
}

ManipulationMode mode_from_name(const std::string& name) {
  if (name == "addition") return ManipulationMode::Addition;
  if (name == "removal") return ManipulationMode::Removal;
  throw ValidationError("guidance.mode: expected 'addition' or 'removal', got '" + name + "'");
}

std::string composition_name(CompositionRule rule) {
  return rule == CompositionRule::Projection ? "projection" : "bayes";
}

CompositionRule composition_from_name(const std::string& name) {
  if (name == "projection") return CompositionRule::Projection;
  if (name == "bayes") return CompositionRule::Bayes;
  throw ValidationError("guidance.composition: expected 'projection' or 'bayes', got '" + name +
                        "'");
}

std::string method_name(SamplerMethod method) {
  return method == SamplerMethod::DDPM ? "ddpm" : "ddim";
}

SamplerMethod method_from_name(const std::string& name) {
  if (name == "ddpm") return SamplerMethod::DDPM;
  if (name == "ddim") return SamplerMethod::DDIM;
  throw ValidationError("sampler.method: expected 'ddpm' or 'ddim', got '" + name + "'");
}

void reject_unknown_keys(const nlohmann::json& obj, const std::string& block,
                         std::initializer_list<const char*> allowed) {
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* key : allowed) {
      if (item.key() == key) {
        known = true;
        break;
      }
    }
    if (!known) throw ValidationError(block + "." + item.key() + ": unknown key");
  }
}

const nlohmann::json* maybe(const nlohmann::json& obj, const char* key) {
  const auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

double get_number(const nlohmann::json& obj, const std::string& block, const char* key,
                  double fallback) {
  const nlohmann::json* v = maybe(obj, key);
  if (v == nullptr) return fallback;
  if (!v->is_number()) throw ValidationError(block + "." + key + ": expected a number");
  return v->get<double>();
}

int get_int(const nlohmann::json& obj, const std::string& block, const char* key, int fallback) {
  const nlohmann::json* v = maybe(obj, key);
  if (v == nullptr) return fallback;
  if (!v->is_number_integer()) throw ValidationError(block + "." + key + ": expected an integer");
  return v->get<int>();
}

std::uint64_t get_seed(const nlohmann::json& obj, const std::string& block, const char* key,
                       std::uint64_t fallback) {
  const nlohmann::json* v = maybe(obj, key);
  if (v == nullptr) return fallback;
  if (!v->is_number_integer() || (v->is_number_integer() && v->get<double>() < 0)) {
    throw ValidationError(block + "." + key + ": expected a non-negative integer");
  }
  return v->get<std::uint64_t>();
}

std::string get_string(const nlohmann::json& obj, const std::string& block, const char* key,
                       const std::string& fallback) {
  const nlohmann::json* v = maybe(obj, key);
  if (v == nullptr) return fallback;
  if (!v->is_string()) throw ValidationError(block + "." + key + ": expected a string");
  return v->get<std::string>();
}

GaussianComponent<double> parse_component(const nlohmann::json& doc, const std::string& block) {
  if (!doc.is_object()) throw ValidationError(block + ": expected a component object");
  reject_unknown_keys(doc, block, {"weight", "mean", "variance"});
  const nlohmann::json* mean = maybe(doc, "mean");
  const nlohmann::json* variance = maybe(doc, "variance");
  if (mean == nullptr || !mean->is_array() || variance == nullptr || !variance->is_array()) {
    throw ValidationError(block + ": 'mean' and 'variance' must be numeric arrays");
  }
  GaussianComponent<double> c;
  c.weight = get_number(doc, block, "weight", 1.0);
  c.mean.resize(static_cast<Eigen::Index>(mean->size()));
  c.variance.resize(static_cast<Eigen::Index>(variance->size()));
  for (std::size_t i = 0; i < mean->size(); ++i) {
    if (!(*mean)[i].is_number()) throw ValidationError(block + ".mean: expected numbers");
    c.mean[static_cast<Eigen::Index>(i)] = (*mean)[i].get<double>();
  }
  for (std::size_t i = 0; i < variance->size(); ++i) {
    if (!(*variance)[i].is_number()) throw ValidationError(block + ".variance: expected numbers");
    c.variance[static_cast<Eigen::Index>(i)] = (*variance)[i].get<double>();
  }
  return c;
}

GaussianMixture<double> parse_mixture(const nlohmann::json& doc, const std::string& block) {
  if (!doc.is_array() || doc.empty()) {
    throw ValidationError(block + ": expected a non-empty array of components");
  }
  std::vector<GaussianComponent<double>> components;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    components.push_back(parse_component(doc[i], block + "[" + std::to_string(i) + "]"));
  }
  try {
    return make_mixture(std::move(components));
  } catch (const Error& e) {
    throw ValidationError(block + ": " + e.what());
  }
}

nlohmann::json mixture_to_json(const GaussianMixture<double>& m) {
  nlohmann::json components = nlohmann::json::array();
  for (const auto& c : m.components) {
    nlohmann::json comp;
    comp["weight"] = c.weight;
    comp["mean"] = std::vector<double>(c.mean.data(), c.mean.data() + c.mean.size());
    comp["variance"] =
        std::vector<double>(c.variance.data(), c.variance.data() + c.variance.size());
    components.push_back(std::move(comp));
  }
  return components;
}

void parse_world(const nlohmann::json* doc, ExperimentConfig& cfg) {
  if (doc == nullptr || (doc->is_string() && doc->get<std::string>() == "demo")) {
    cfg.world = demo_world();
    return;
  }
  if (doc->is_string()) {
    throw ValidationError("world: the only string form is \"demo\"");
  }
  if (!doc->is_object()) throw ValidationError("world: expected an object or \"demo\"");
  reject_unknown_keys(*doc, "world", {"demo", "prior", "conditions", "checkpoint"});
  if (const nlohmann::json* demo = maybe(*doc, "demo")) {
    if (!demo->is_boolean() || !demo->get<bool>()) {
      throw ValidationError("world.demo: the only supported value is true");
    }
    if (maybe(*doc, "prior") != nullptr || maybe(*doc, "conditions") != nullptr) {
      throw ValidationError("world: 'demo' excludes 'prior' and 'conditions'");
    }
    cfg.world = demo_world();
    cfg.checkpoint_path = get_string(*doc, "world", "checkpoint", "");
    return;
  }
  const nlohmann::json* prior = maybe(*doc, "prior");
  const nlohmann::json* conditions = maybe(*doc, "conditions");
  if (prior == nullptr || conditions == nullptr) {
    throw ValidationError("world: 'prior' and 'conditions' are required");
  }
  AnalyticWorld<double> world;
  world.prior = parse_mixture(*prior, "world.prior");
  if (!conditions->is_array() || conditions->empty()) {
    throw ValidationError("world.conditions: expected a non-empty array");
  }
  for (std::size_t i = 0; i < conditions->size(); ++i) {
    const std::string block = "world.conditions[" + std::to_string(i) + "]";
    const nlohmann::json& entry = (*conditions)[i];
    if (!entry.is_object()) throw ValidationError(block + ": expected an object");
    reject_unknown_keys(entry, block, {"name", "components"});
    const std::string name = get_string(entry, block, "name", "");
    if (name.empty()) throw ValidationError(block + ".name: required non-empty string");
    if (std::find(world.names.begin(), world.names.end(), name) != world.names.end()) {
      throw ValidationError(block + ".name: duplicate condition name '" + name + "'");
    }
    const nlohmann::json* comps = maybe(entry, "components");
    if (comps == nullptr) throw ValidationError(block + ".components: required");
    GaussianMixture<double> m = parse_mixture(*comps, block + ".components");
    if (m.dim() != world.prior.dim()) {
      throw ValidationError(block + ": dimension disagrees with world.prior");
    }
    world.conditionals[ConditionId{static_cast<std::int32_t>(i)}] = std::move(m);
    world.names.push_back(name);
  }
  cfg.world = std::move(world);
  cfg.checkpoint_path = get_string(*doc, "world", "checkpoint", "");
}

ConditionId resolve_condition(const ExperimentConfig& cfg, const std::string& block,
                              const std::string& name) {
  for (std::size_t i = 0; i < cfg.world.names.size(); ++i) {
    if (cfg.world.names[i] == name) return ConditionId{static_cast<std::int32_t>(i)};
  }
  throw ValidationError(block + ": unknown condition '" + name + "'");
}

double parse_numeric_token(const std::string& token, const std::string& block) {
  try {
    std::size_t used = 0;
    const double v = std::stod(token, &used);
    if (used != token.size() || !std::isfinite(v)) throw std::invalid_argument(token);
    return v;
  } catch (const std::exception&) {
    throw ValidationError(block + ": '" + token + "' is not a finite number");
  }
}

void validate_sweep_values(const ExperimentConfig& cfg) {
  const std::string& axis = cfg.sweep_axis;
  if (axis.empty()) return;
  if (axis != "w1" && axis != "w2" && axis != "scheduler" && axis != "cfg") {
    throw ValidationError("sweep.axis: expected one of w1, w2, scheduler, cfg; got '" + axis +
                          "'");
  }
  if (cfg.sweep_values.empty()) throw ValidationError("sweep.values: must be non-empty");
  for (const std::string& token : cfg.sweep_values) {
    if (axis == "scheduler") {
      if (token == "all") continue;
      try {
        scheduler_from_name(token);
      } catch (const Error&) {
        throw ValidationError("sweep.values: unknown scheduler '" + token + "'");
      }
      continue;
    }
    const double v = parse_numeric_token(token, "sweep.values");
    if (axis == "w2" && v < 0.0) throw ValidationError("sweep.values: w2 values must be >= 0");
    if (axis == "cfg" && !(v > 0.0)) throw ValidationError("sweep.values: cfg values must be > 0");
  }
}

nlohmann::json build_echo(const ExperimentConfig& cfg) {
  nlohmann::json doc;
  nlohmann::json world;
  world["prior"] = mixture_to_json(cfg.world.prior);
  nlohmann::json conditions = nlohmann::json::array();
  for (std::size_t i = 0; i < cfg.world.names.size(); ++i) {
    nlohmann::json entry;
    entry["name"] = cfg.world.names[i];
    entry["components"] =
        mixture_to_json(cfg.world.conditionals.at(ConditionId{static_cast<std::int32_t>(i)}));
    conditions.push_back(std::move(entry));
  }
  world["conditions"] = std::move(conditions);
  if (!cfg.checkpoint_path.empty()) world["checkpoint"] = cfg.checkpoint_path;
  doc["world"] = std::move(world);

  doc["schedule"] = {{"T", cfg.T}, {"beta_start", cfg.beta_start}, {"beta_end", cfg.beta_end}};
  doc["sampler"] = {{"method", method_name(cfg.sampler.method)},
                    {"steps", cfg.sampler.steps},
                    {"eta", cfg.sampler.ddim_eta},
                    {"seed", cfg.sampler.seed},
                    {"n_samples", cfg.n_samples}};
  doc["guidance"] = {{"mode", mode_name(cfg.mode)},
                     {"composition", composition_name(cfg.composition)},
                     {"src", cfg.world.names.at(static_cast<std::size_t>(cfg.src.value))},
                     {"tgt", cfg.world.names.at(static_cast<std::size_t>(cfg.tgt.value))},
                     {"w1", cfg.w1},
                     {"w2_base", cfg.w2_base},
                     {"scheduler", scheduler_name(cfg.scheduler)},
                     {"cfg_scale", cfg.cfg_scale}};
  if (!cfg.sweep_axis.empty()) {
    nlohmann::json values = nlohmann::json::array();
    for (const std::string& token : cfg.sweep_values) {
      if (cfg.sweep_axis == "scheduler") {
        values.push_back(token);
      } else {
        values.push_back(parse_numeric_token(token, "sweep.values"));
      }
    }
    doc["sweep"] = {{"axis", cfg.sweep_axis}, {"values", std::move(values)}};
  }
  doc["output"] = cfg.output_dir;
  doc["train"] = {{"epochs", cfg.train_cfg.epochs},
                  {"batch_size", cfg.train_cfg.batch_size},
                  {"learning_rate", cfg.train_cfg.learning_rate},
                  {"seed", cfg.train_cfg.seed},
                  {"samples_per_condition", cfg.train_cfg.samples_per_condition}};
  return doc;
}

void write_bytes(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed while writing: " + path.string());
}

void write_samples_csv(const fs::path& path, const Eigen::MatrixXd& samples) {
  std::string text;
  text.reserve(static_cast<std::size_t>(samples.rows()) * 40u);
  for (Eigen::Index c = 0; c < samples.cols(); ++c) {
    if (c > 0) text += ',';
    text += "x" + std::to_string(c);
  }
  text += '\n';
  for (Eigen::Index r = 0; r < samples.rows(); ++r) {
    for (Eigen::Index c = 0; c < samples.cols(); ++c) {
      if (c > 0) text += ',';
      text += fmt_double(samples(r, c));
    }
    text += '\n';
  }
  write_bytes(path, text);
}

// 8-bit binary PGM, max-normalized, top row at y_max.
void write_pgm(const fs::path& path, const Grid2D& grid) {
  const int res = grid.spec.resolution;
  std::string bytes = "P5\n" + std::to_string(res) + " " + std::to_string(res) + "\n255\n";
  const double peak = grid.prob.maxCoeff();
  for (int iy = res - 1; iy >= 0; --iy) {
    for (int ix = 0; ix < res; ++ix) {
      const double v = peak > 0.0 ? grid.prob(iy, ix) / peak : 0.0;
      bytes.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
    }
  }
  write_bytes(path, bytes);
}

// Bayes-composed target as cell masses, computed in log space so quotient
// cells cannot underflow; used when the world is not single-Gaussian.
Grid2D composed_target_grid(const AnalyticWorld<double>& world, ManipulationMode mode,
                            ConditionId src, ConditionId tgt, const GridSpec& spec) {
  Grid2D g;
  g.spec = spec;
  g.prob.resize(spec.resolution, spec.resolution);
  Eigen::MatrixXd logs(spec.resolution, spec.resolution);
  for (int iy = 0; iy < spec.resolution; ++iy) {
    for (int ix = 0; ix < spec.resolution; ++ix) {
      const Eigen::Vector2d z(g.cell_x(ix), g.cell_y(iy));
      const double l_src = log_density(world.distribution(src), z);
      const double l_tgt = log_density(world.distribution(tgt), z);
      const double l_prior = log_density(world.prior, z);
      logs(iy, ix) = mode == ManipulationMode::Addition ? l_src + l_tgt - l_prior
                                                        : l_src + l_prior - l_tgt;
    }
  }
  const double shift = logs.maxCoeff();
  g.prob = (logs.array() - shift).exp().matrix();
  g.prob /= g.prob.sum();
  return g;
}

Eigen::MatrixXd draw_from_grid(const Grid2D& grid, int n, Rng& rng) {
  const int res = grid.spec.resolution;
  std::vector<double> cdf(static_cast<std::size_t>(res) * res);
  double acc = 0.0;
  for (int iy = 0; iy < res; ++iy) {
    for (int ix = 0; ix < res; ++ix) {
      acc += grid.prob(iy, ix);
      cdf[static_cast<std::size_t>(iy) * res + ix] = acc;
    }
  }
  const double dx = (grid.spec.x_max - grid.spec.x_min) / res;
  const double dy = (grid.spec.y_max - grid.spec.y_min) / res;
  Eigen::MatrixXd out(n, 2);
  for (int r = 0; r < n; ++r) {
    const double u = rng.uniform() * acc;
    const auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
    const auto cell = static_cast<int>(it - cdf.begin());
    const int iy = cell / res;
    const int ix = cell % res;
    out(r, 0) = grid.cell_x(ix) + (rng.uniform() - 0.5) * dx;
    out(r, 1) = grid.cell_y(iy) + (rng.uniform() - 0.5) * dy;
  }
  return out;
}

struct MetricsRow {
  std::string run_id;
  std::string mode;
  double w1 = 0.0;
  double w2_base = 0.0;
  std::string scheduler;
  double cfg = 0.0;
  int steps = 0;
  double grid_kl = 0.0;
  double sliced_w = 0.0;
  double mean_err = 0.0;
  double cov_err = 0.0;
  std::int64_t clamped = 0;
};

std::string metrics_csv(const std::vector<MetricsRow>& rows, bool ranked) {
  std::string text =
      "run_id,mode,w1,w2_base,scheduler,cfg,steps,grid_kl,sliced_w,mean_err,cov_err,"
      "clamped_count";
  if (ranked) text += ",rank";
  text += '\n';

  std::vector<std::size_t> rank(rows.size(), 0);
  if (ranked) {
    std::vector<std::size_t> order(rows.size());
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(), [&rows](std::size_t a, std::size_t b) {
      return rows[a].grid_kl < rows[b].grid_kl;
    });
    for (std::size_t pos = 0; pos < order.size(); ++pos) rank[order[pos]] = pos + 1;
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const MetricsRow& r = rows[i];
    text += r.run_id + ',' + r.mode + ',' + fmt_double(r.w1) + ',' + fmt_double(r.w2_base) + ',' +
            r.scheduler + ',' + fmt_double(r.cfg) + ',' + std::to_string(r.steps) + ',' +
            fmt_double(r.grid_kl) + ',' + fmt_double(r.sliced_w) + ',' + fmt_double(r.mean_err) +
            ',' + fmt_double(r.cov_err) + ',' + std::to_string(r.clamped);
    if (ranked) text += ',' + std::to_string(rank[i]);
    text += '\n';
  }
  return text;
}

void validate_checkpoint_against(const Mlp& net, const ExperimentConfig& cfg) {
  if (net.dimension() != cfg.world.dim()) {
    throw ValidationError("world.checkpoint: network dimension disagrees with the world");
  }
  if (net.spec().condition_count != static_cast<int>(cfg.world.names.size())) {
    throw ValidationError("world.checkpoint: network condition count disagrees with the world");
  }
  if (net.max_timestep() != cfg.T) {
    throw ValidationError("world.checkpoint: network timestep range disagrees with schedule.T");
  }
  if (!net.condition_names.empty() && net.condition_names != cfg.world.names) {
    throw ValidationError("world.checkpoint: condition names disagree with the world");
  }
}

}  // namespace

GuidanceConfig ExperimentConfig::guidance() const {
  GuidanceConfig g;
  g.mode = mode;
  g.composition = composition;
  g.w1 = w1;
  g.w2 = make_scheduler(scheduler, w2_base, T);
  g.cfg_scale = cfg_scale;
  return g;
}

ExperimentConfig load_config(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ValidationError("config: top-level must be an object");
  reject_unknown_keys(doc, "config",
                      {"world", "schedule", "sampler", "guidance", "sweep", "output", "train"});

  ExperimentConfig cfg;
  parse_world(maybe(doc, "world"), cfg);

  const nlohmann::json empty = nlohmann::json::object();
  const nlohmann::json& schedule = maybe(doc, "schedule") ? *maybe(doc, "schedule") : empty;
  if (!schedule.is_object()) throw ValidationError("schedule: expected an object");
  reject_unknown_keys(schedule, "schedule", {"T", "beta_start", "beta_end"});
  cfg.T = get_int(schedule, "schedule", "T", 1000);
  cfg.beta_start = get_number(schedule, "schedule", "beta_start", 1e-4);
  cfg.beta_end = get_number(schedule, "schedule", "beta_end", 0.02);
  try {
    build_schedule(cfg.T, cfg.beta_start, cfg.beta_end);
  } catch (const Error& e) {
    throw ValidationError(std::string("schedule: ") + e.what());
  }

  const nlohmann::json& sampler = maybe(doc, "sampler") ? *maybe(doc, "sampler") : empty;
  if (!sampler.is_object()) throw ValidationError("sampler: expected an object");
  reject_unknown_keys(sampler, "sampler", {"method", "steps", "eta", "seed", "n_samples"});
  cfg.sampler.method = method_from_name(get_string(sampler, "sampler", "method", "ddim"));
  cfg.sampler.steps = get_int(sampler, "sampler", "steps", 50);
  if (cfg.sampler.steps < 1 || cfg.sampler.steps > cfg.T) {
    throw ValidationError("sampler.steps: must lie in [1, schedule.T]");
  }
  cfg.sampler.ddim_eta = get_number(sampler, "sampler", "eta", 0.0);
  if (!(cfg.sampler.ddim_eta >= 0.0) || !std::isfinite(cfg.sampler.ddim_eta)) {
    throw ValidationError("sampler.eta: must be finite and >= 0");
  }
  cfg.sampler.seed = get_seed(sampler, "sampler", "seed", 0);
  cfg.n_samples = get_int(sampler, "sampler", "n_samples", 20000);
  if (cfg.n_samples < 1) throw ValidationError("sampler.n_samples: must be >= 1");

  const nlohmann::json& guidance = maybe(doc, "guidance") ? *maybe(doc, "guidance") : empty;
  if (!guidance.is_object()) throw ValidationError("guidance: expected an object");
  reject_unknown_keys(
      guidance, "guidance",
      {"mode", "composition", "src", "tgt", "w1", "w2_base", "scheduler", "cfg_scale"});
  cfg.mode = mode_from_name(get_string(guidance, "guidance", "mode", "addition"));
  cfg.composition =
      composition_from_name(get_string(guidance, "guidance", "composition", "projection"));
  if (cfg.world.names.size() < 2) {
    throw ValidationError("world.conditions: at least two conditions are required");
  }
  cfg.src = resolve_condition(cfg, "guidance.src",
                              get_string(guidance, "guidance", "src", cfg.world.names[0]));
  cfg.tgt = resolve_condition(cfg, "guidance.tgt",
                              get_string(guidance, "guidance", "tgt", cfg.world.names[1]));
  cfg.w1 = get_number(guidance, "guidance", "w1", 1.0);
  if (!std::isfinite(cfg.w1)) throw ValidationError("guidance.w1: must be finite");
  cfg.w2_base = get_number(guidance, "guidance", "w2_base", 0.5);
  if (!(cfg.w2_base >= 0.0) || !std::isfinite(cfg.w2_base)) {
    throw ValidationError("guidance.w2_base: must be finite and >= 0");
  }
  try {
    cfg.scheduler = scheduler_from_name(get_string(guidance, "guidance", "scheduler", "cosine"));
  } catch (const Error& e) {
    throw ValidationError(std::string("guidance.scheduler: ") + e.what());
  }
  cfg.cfg_scale = get_number(guidance, "guidance", "cfg_scale", 7.5);
  if (!(cfg.cfg_scale > 0.0) || !std::isfinite(cfg.cfg_scale)) {
    throw ValidationError("guidance.cfg_scale: must be finite and > 0");
  }

  if (const nlohmann::json* sweep = maybe(doc, "sweep")) {
    if (!sweep->is_object()) throw ValidationError("sweep: expected an object");
    reject_unknown_keys(*sweep, "sweep", {"axis", "values"});
    cfg.sweep_axis = get_string(*sweep, "sweep", "axis", "");
    if (cfg.sweep_axis.empty()) throw ValidationError("sweep.axis: required non-empty string");
    const nlohmann::json* values = maybe(*sweep, "values");
    if (values == nullptr || !values->is_array()) {
      throw ValidationError("sweep.values: expected an array");
    }
    for (const nlohmann::json& v : *values) {
      if (v.is_string()) {
        cfg.sweep_values.push_back(v.get<std::string>());
      } else if (v.is_number()) {
        cfg.sweep_values.push_back(v.dump());
      } else {
        throw ValidationError("sweep.values: entries must be numbers or strings");
      }
    }
    validate_sweep_values(cfg);
  }

  cfg.output_dir = doc.contains("output")
                       ? (doc.at("output").is_string()
                              ? doc.at("output").get<std::string>()
                              : throw ValidationError("output: expected a string"))
                       : "gtf_out";
  if (cfg.output_dir.empty()) throw ValidationError("output: must be non-empty");

  const nlohmann::json& train = maybe(doc, "train") ? *maybe(doc, "train") : empty;
  if (!train.is_object()) throw ValidationError("train: expected an object");
  reject_unknown_keys(train, "train",
                      {"epochs", "batch_size", "learning_rate", "seed", "samples_per_condition"});
  cfg.train_cfg.epochs = get_int(train, "train", "epochs", 30);
  if (cfg.train_cfg.epochs < 1) throw ValidationError("train.epochs: must be >= 1");
  cfg.train_cfg.batch_size = get_int(train, "train", "batch_size", 128);
  if (cfg.train_cfg.batch_size < 1) throw ValidationError("train.batch_size: must be >= 1");
  cfg.train_cfg.learning_rate = get_number(train, "train", "learning_rate", 1e-3);
  if (!(cfg.train_cfg.learning_rate >= 0.0) || !std::isfinite(cfg.train_cfg.learning_rate)) {
    throw ValidationError("train.learning_rate: must be finite and >= 0");
  }
  cfg.train_cfg.seed = get_seed(train, "train", "seed", 0);
  cfg.train_cfg.samples_per_condition = get_int(train, "train", "samples_per_condition", 4000);
  if (cfg.train_cfg.samples_per_condition < 1) {
    throw ValidationError("train.samples_per_condition: must be >= 1");
  }

  cfg.echo = build_echo(cfg);
  return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config: " + path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  return load_config(doc);
}

void override_seed(ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.sampler.seed = seed;
  cfg.echo["sampler"]["seed"] = seed;
}

void override_output(ExperimentConfig& cfg, const std::string& dir) {
  if (dir.empty()) throw ValidationError("output: must be non-empty");
  cfg.output_dir = dir;
  cfg.echo["output"] = dir;
}

void override_sweep(ExperimentConfig& cfg, const std::string& axis,
                    const std::vector<std::string>& values) {
  cfg.sweep_axis = axis;
  cfg.sweep_values = values;
  validate_sweep_values(cfg);
  nlohmann::json typed = nlohmann::json::array();
  for (const std::string& token : values) {
    if (axis == "scheduler") {
      typed.push_back(token);
    } else {
      typed.push_back(parse_numeric_token(token, "sweep.values"));
    }
  }
  cfg.echo["sweep"] = {{"axis", axis}, {"values", std::move(typed)}};
}

std::vector<RunPoint> expand_sweep(const ExperimentConfig& cfg, const std::string& axis,
                                   const std::vector<std::string>& values) {
  const GuidanceConfig base = cfg.guidance();
  std::vector<RunPoint> points;
  auto push = [&points](GuidanceConfig g) {
    char id[16];
    std::snprintf(id, sizeof(id), "run%03zu", points.size());
    points.push_back({id, std::move(g)});
  };

  if (axis.empty()) {
    push(base);
    return points;
  }
  if (values.empty()) throw ValidationError("sweep.values: must be non-empty");

  std::vector<std::string> expanded;
  for (const std::string& token : values) {
    if (axis == "scheduler" && token == "all") {
      expanded.insert(expanded.end(),
                      {"static", "linear", "cosine", "inverse_linear", "sine"});
    } else {
      expanded.push_back(token);
    }
  }

  for (const std::string& token : expanded) {
    GuidanceConfig g = base;
    if (axis == "w1") {
      g.w1 = parse_numeric_token(token, "sweep.values");
    } else if (axis == "w2") {
      const double w0 = parse_numeric_token(token, "sweep.values");
      g.w2 = make_scheduler(base.w2.kind, w0, cfg.T);
    } else if (axis == "scheduler") {
      g.w2 = make_scheduler(scheduler_from_name(token), base.w2.w0, cfg.T);
    } else if (axis == "cfg") {
      g.cfg_scale = parse_numeric_token(token, "sweep.values");
    } else {
      throw ValidationError("sweep.axis: expected one of w1, w2, scheduler, cfg; got '" + axis +
                            "'");
    }
    push(std::move(g));
  }
  return points;
}

void run_bundle(const ExperimentConfig& cfg, bool ranked) {
  fs::create_directories(cfg.output_dir);
  const NoiseSchedule sched = build_schedule(cfg.T, cfg.beta_start, cfg.beta_end);

  AnalyticDenoiser analytic(cfg.world, sched);
  std::unique_ptr<Mlp> learned;
  const ConditionedDenoiser* denoiser = &analytic;
  if (!cfg.checkpoint_path.empty()) {
    learned = std::make_unique<Mlp>(load_checkpoint(cfg.checkpoint_path));
    validate_checkpoint_against(*learned, cfg);
    denoiser = learned.get();
  }

  const std::vector<RunPoint> points = expand_sweep(cfg, cfg.sweep_axis, cfg.sweep_values);

  // The Bayes target for metrics: exact mixture when the world is
  // single-Gaussian, otherwise a log-space grid oracle (2-D only).
  bool have_mixture_target = true;
  GaussianMixture<double> target_mix;
  try {
    target_mix = composed_target(cfg.world, cfg.mode, cfg.src, cfg.tgt);
  } catch (const UnsupportedComposition&) {
    have_mixture_target = false;
  }
  const bool grid_metrics = cfg.world.dim() == 2;
  if (!have_mixture_target && !grid_metrics) {
    throw UnsupportedComposition(
        "no oracle target available: multi-component world with dimension != 2");
  }
  const GridSpec gspec;
  Grid2D target_grid;
  if (grid_metrics) {
    target_grid = have_mixture_target
                      ? density_grid(target_mix, gspec)
                      : composed_target_grid(cfg.world, cfg.mode, cfg.src, cfg.tgt, gspec);
  }

  Rng ref_rng(derive_stream_seed(cfg.sampler.seed, kRefStream));
  Eigen::MatrixXd reference;
  if (have_mixture_target) {
    reference.resize(cfg.n_samples, cfg.world.dim());
    for (int r = 0; r < cfg.n_samples; ++r) {
      reference.row(r) = draw_sample(target_mix, ref_rng).transpose();
    }
  } else {
    reference = draw_from_grid(target_grid, cfg.n_samples, ref_rng);
  }
  Eigen::VectorXd target_mean;
  Eigen::MatrixXd target_cov;
  if (have_mixture_target) {
    mixture_moments(target_mix, target_mean, target_cov);
  } else {
    const Eigen::Vector2d gm = grid_mean(target_grid);
    target_mean = gm;
    target_cov = Eigen::Matrix2d::Zero();
    for (int iy = 0; iy < gspec.resolution; ++iy) {
      for (int ix = 0; ix < gspec.resolution; ++ix) {
        const Eigen::Vector2d off(target_grid.cell_x(ix) - gm.x(),
                                  target_grid.cell_y(iy) - gm.y());
        target_cov += target_grid.prob(iy, ix) * (off * off.transpose());
      }
    }
  }

  std::vector<MetricsRow> rows;
  nlohmann::json manifest_runs = nlohmann::json::array();
  auto write_manifest = [&cfg, &manifest_runs](const std::string& status,
                                               const std::string& error) {
    nlohmann::json manifest;
    manifest["version"] = kVersion;
    manifest["status"] = status;
    if (!error.empty()) manifest["error"] = error;
    manifest["config"] = cfg.echo;
    manifest["runs"] = manifest_runs;
    write_bytes(fs::path(cfg.output_dir) / "manifest.json", manifest.dump(1) + "\n");
  };

  try {
    for (const RunPoint& point : points) {
      const Eigen::MatrixXd samples = sample(*denoiser, sched, cfg.sampler, point.guidance,
                                             cfg.src, cfg.tgt, cfg.n_samples);
      const std::string samples_file = "samples_" + point.run_id + ".csv";
      write_samples_csv(fs::path(cfg.output_dir) / samples_file, samples);

      MetricsRow row;
      row.run_id = point.run_id;
      row.mode = mode_name(point.guidance.mode);
      row.w1 = point.guidance.w1;
      row.w2_base = point.guidance.w2.w0;
      row.scheduler = scheduler_name(point.guidance.w2.kind);
      row.cfg = point.guidance.cfg_scale;
      row.steps = cfg.sampler.steps;

      std::string heatmap_file;
      if (grid_metrics) {
        std::int64_t clamped = 0;
        const Grid2D hist = histogram_grid(samples, gspec, &clamped);
        row.clamped = clamped;
        row.grid_kl = grid_kl(hist, target_grid);
        heatmap_file = "heatmap_" + point.run_id + ".pgm";
        write_pgm(fs::path(cfg.output_dir) / heatmap_file, hist);
      } else {
        row.grid_kl = std::numeric_limits<double>::quiet_NaN();
      }
      row.sliced_w = sliced_wasserstein(samples, reference, 64,
                                        derive_stream_seed(cfg.sampler.seed, kSlicedStream));
      const Eigen::VectorXd sample_mean = samples.colwise().mean().transpose();
      const Eigen::MatrixXd centered = samples.rowwise() - sample_mean.transpose();
      const Eigen::MatrixXd sample_cov =
          samples.rows() > 1
              ? Eigen::MatrixXd(centered.transpose() * centered /
                                static_cast<double>(samples.rows() - 1))
              : Eigen::MatrixXd::Zero(samples.cols(), samples.cols());
      row.mean_err = (sample_mean - target_mean).cwiseAbs().maxCoeff();
      row.cov_err = (sample_cov - target_cov).norm();
      rows.push_back(row);

      nlohmann::json record;
      record["run_id"] = point.run_id;
      record["samples"] = samples_file;
      if (!heatmap_file.empty()) {
        record["heatmap"] = heatmap_file;
      } else {
        record["heatmap"] = nullptr;
      }
      record["grid_kl"] = grid_metrics ? nlohmann::json(row.grid_kl) : nlohmann::json(nullptr);
      record["sliced_w"] = row.sliced_w;
      record["mean_err"] = row.mean_err;
      record["cov_err"] = row.cov_err;
      record["clamped_count"] = row.clamped;
      manifest_runs.push_back(std::move(record));
    }
  } catch (const std::exception& e) {
    write_manifest("incomplete", e.what());
    throw;
  }

  write_bytes(fs::path(cfg.output_dir) / "metrics.csv", metrics_csv(rows, ranked));
  write_manifest("complete", "");
}

void train_command(const ExperimentConfig& cfg, const std::string& checkpoint_path) {
  const NoiseSchedule sched = build_schedule(cfg.T, cfg.beta_start, cfg.beta_end);
  MlpSpec spec;
  spec.data_dim = static_cast<int>(cfg.world.dim());
  spec.condition_count = static_cast<int>(cfg.world.names.size());
  Mlp net(spec, cfg.T, cfg.train_cfg.seed);
  net.condition_names = cfg.world.names;
  const std::vector<double> history = train(net, cfg.world, sched, cfg.train_cfg);
  save_checkpoint(net, checkpoint_path);
  std::cout << "epochs: " << history.size() << "\n";
  std::cout << "initial loss: " << fmt_double(history.front()) << "\n";
  std::cout << "final loss: " << fmt_double(history.back()) << "\n";
  std::cout << "checkpoint: " << checkpoint_path << "\n";
}

namespace {

struct CheckContext {
  int failures = 0;

  void report(bool pass, const std::string& name, const std::string& detail) {
    std::cout << (pass ? "PASS  " : "FAIL  ") << name;
    if (!detail.empty()) std::cout << " (" << detail << ")";
    std::cout << "\n";
    if (!pass) ++failures;
  }
};

}  // namespace

int check_command(const std::string& profile) {
  if (profile != "default" && profile != "strict") {
    throw ValidationError("tolerance-profile: expected 'default' or 'strict'");
  }
  const bool strict = profile == "strict";
  const double fd_tol = strict ? 1e-6 : 1e-5;
  const double bayes_tol = strict ? 1e-10 : 1e-8;

  const AnalyticWorld<double> world = demo_world();
  const NoiseSchedule sched = build_schedule(1000, 1e-4, 0.02);
  const AnalyticDenoiser denoiser(world, sched);
  CheckContext ctx;

  {
    // Finite-difference agreement of the exact score at random (x, t, c).
    Rng rng(derive_stream_seed(7, 1));
    double worst = 0.0;
    const std::vector<ConditionId> ids = {UNCONDITIONAL, ConditionId{0}, ConditionId{1},
                                          ConditionId{2}};
    for (int i = 0; i < 200; ++i) {
      const Eigen::Vector2d x(6.0 * (rng.uniform() - 0.5), 6.0 * (rng.uniform() - 0.5));
      const int t = 1 + static_cast<int>(rng.uniform() * 999.0);
      const ConditionId c = ids[static_cast<std::size_t>(rng.uniform() * 4.0) % 4];
      const GaussianMixture<double> noised =
          noised_mixture(world.distribution(c), sched.alpha_bar_at(t));
      const Eigen::Vector2d s = score(noised, x);
      const double h = 1e-4;
      Eigen::Vector2d fd;
      for (int k = 0; k < 2; ++k) {
        Eigen::Vector2d hi = x;
        Eigen::Vector2d lo = x;
        hi[k] += h;
        lo[k] -= h;
        fd[k] = (log_density(noised, hi) - log_density(noised, lo)) / (2.0 * h);
      }
      worst = std::max(worst, (s - fd).norm() / std::max(1e-12, fd.norm()));
    }
    ctx.report(worst < fd_tol, "score matches finite differences",
               "max rel " + fmt_double(worst) + " < " + fmt_double(fd_tol));
  }

  {
    // At t = 0 the noised distributions coincide with the data distributions,
    // so the Bayes addition of unit-sigma epsilon fields must reproduce the
    // epsilon field of the composed target.
    Rng rng(derive_stream_seed(7, 2));
    double worst = 0.0;
    const GaussianMixture<double> target =
        composed_target(world, ManipulationMode::Addition, ConditionId{0}, ConditionId{1});
    for (int i = 0; i < 100; ++i) {
      const Eigen::Vector2d x(8.0 * (rng.uniform() - 0.5), 8.0 * (rng.uniform() - 0.5));
      GuidanceDeltasd deltas;
      deltas.unconditional = -score(world.prior, x);
      deltas.delta_src = -score(world.distribution(ConditionId{0}), x) - deltas.unconditional;
      deltas.delta_tgt = -score(world.distribution(ConditionId{1}), x) - deltas.unconditional;
      const Eigen::VectorXd composed = compose_bayes_addition(deltas);
      const Eigen::VectorXd expected = -score(target, x);
      worst = std::max(worst, (composed - expected).norm() / std::max(1e-12, expected.norm()));
    }
    ctx.report(worst < bayes_tol, "Bayes field identity at t=0",
               "max rel " + fmt_double(worst) + " < " + fmt_double(bayes_tol));
  }

  {
    // Discrete scheduler mass stays within 2/T of the shared normalization.
    const int T = 1000;
    const double w0 = 1.0;
    const std::vector<std::pair<SchedulerKind, double>> oracle = {
        {SchedulerKind::Static, 1000.0},
        {SchedulerKind::Linear, 1001.0},
        {SchedulerKind::Cosine, 1001.0},
        {SchedulerKind::InverseLinear, 999.0},
        {SchedulerKind::Sine, 999.0}};
    bool pass = true;
    std::string detail;
    for (const auto& [kind, exact] : oracle) {
      const double mass = discrete_mass(make_scheduler(kind, w0, T));
      const bool ok = strict ? std::abs(mass - exact) < 1e-9
                             : std::abs(mass - w0 * T) / (w0 * T) <= 2.0 / T;
      if (!ok) {
        pass = false;
        detail = std::string(scheduler_name(kind)) + " mass " + fmt_double(mass);
      }
    }
    ctx.report(pass, "scheduler discrete mass", detail);
  }

  {
    // Addition then removal round-trips to the original conditional.
    const GaussianMixture<double> joint =
        composed_target(world, ManipulationMode::Addition, ConditionId{0}, ConditionId{1});
    const GaussianMixture<double> back =
        composed_target(world, ManipulationMode::Removal, ConditionId{2}, ConditionId{1});
    const auto& c1 = world.distribution(ConditionId{0}).components.front();
    const auto& j = world.distribution(ConditionId{2}).components.front();
    const auto& jb = joint.components.front();
    const auto& rb = back.components.front();
    const bool pass = (jb.mean.array() == j.mean.array()).all() &&
                      (jb.variance.array() == j.variance.array()).all() &&
                      (rb.mean.array() == c1.mean.array()).all() &&
                      (rb.variance.array() == c1.variance.array()).all();
    ctx.report(pass, "composed-target round trip", "");
  }

  {
    // Same seed, different thread budget: byte-identical samples.
    GuidanceConfig g;
    g.mode = ManipulationMode::Removal;
    g.w2 = make_scheduler(SchedulerKind::Cosine, 0.5, sched.T);
    SamplerConfig sc;
    sc.steps = 10;
    sc.seed = 99;
    const Eigen::MatrixXd a =
        sample(denoiser, sched, sc, g, ConditionId{2}, ConditionId{1}, 2048);
    const char* old_env = std::getenv("GTF_THREADS");
    const std::string saved = old_env ? old_env : "";
    setenv("GTF_THREADS", "1", 1);
    const Eigen::MatrixXd b =
        sample(denoiser, sched, sc, g, ConditionId{2}, ConditionId{1}, 2048);
    if (old_env) {
      setenv("GTF_THREADS", saved.c_str(), 1);
    } else {
      unsetenv("GTF_THREADS");
    }
    ctx.report((a.array() == b.array()).all(), "sampler determinism across thread budgets", "");
  }

  {
    // Exactly three denoiser queries per guided step.
    CountingDenoiser counting(denoiser);
    GuidanceConfig g;
    g.w2 = make_scheduler(SchedulerKind::Cosine, 0.5, sched.T);
    guided_epsilon(Eigen::Vector2d(0.3, -0.7), 500, ConditionId{0}, ConditionId{1}, counting, g);
    const bool single_ok = counting.queries() == 3;
    counting.reset();
    guided_epsilon_batch(Eigen::MatrixXd::Random(8, 2), 500, ConditionId{0}, ConditionId{1},
                         counting, g);
    const bool batch_ok = counting.queries() == 24;
    ctx.report(single_ok && batch_ok, "three denoiser queries per step", "");
  }

  {
    // Addition with w1 = 1, w2 = 0 reduces to classifier-free guidance.
    GuidanceDeltasd deltas;
    deltas.unconditional = Eigen::Vector2d(0.2, -0.4);
    deltas.delta_src =Eigen::Vector2d(1.0, 0.5);
    deltas.delta_tgt = Eigen::Vector2d(-0.3, 0.8);
    const Eigen::VectorXd guided =
        assemble_guidance(deltas, ManipulationMode::Addition, 1.0, 0.0, 7.5);
    const Eigen::VectorXd cfg_ref = deltas.unconditional + 7.5 * deltas.delta_src;
    ctx.report((guided - cfg_ref).norm() == 0.0, "CFG reduction at w1=1, w2=0", "");
  }

  {
    // Informational: measured landing KLs for the demo tasks. The check
    // recalibrates expectations; it does not gate.
    GuidanceConfig add;
    add.mode = ManipulationMode::Addition;
    add.composition = CompositionRule::Bayes;
    add.w2 = make_scheduler(SchedulerKind::Cosine, 0.5, sched.T);
    SamplerConfig sc;
    sc.steps = 50;
    sc.seed = 11;
    const GridSpec gspec;
    const Eigen::MatrixXd add_samples =
        sample(denoiser, sched, sc, add, ConditionId{0}, ConditionId{1}, 10000);
    const double add_kl = grid_kl(
        histogram_grid(add_samples, gspec),
        density_grid(composed_target(world, ManipulationMode::Addition, ConditionId{0},
                                     ConditionId{1}),
                     gspec));
    GuidanceConfig rem = add;
    rem.mode = ManipulationMode::Removal;
    const Eigen::MatrixXd rem_samples =
        sample(denoiser, sched, sc, rem, ConditionId{2}, ConditionId{1}, 10000);
    const double rem_kl = grid_kl(
        histogram_grid(rem_samples, gspec),
        density_grid(composed_target(world, ManipulationMode::Removal, ConditionId{2},
                                     ConditionId{1}),
                     gspec));
    std::cout << "INFO  demo Bayes-composition landing grid_kl: addition "
              << fmt_double(add_kl) << ", removal " << fmt_double(rem_kl) << "\n";
  }

  std::cout << (ctx.failures == 0 ? "all checks passed" : "checks failed") << "\n";
  return ctx.failures;
}

}  // namespace gtf
