// Acceptance battery: each criterion prints a single PASS/FAIL line with the
// measured quantities and returns a process exit code, so one ctest entry maps
// to one criterion. Protocol constants (seeds, point counts, tolerances) are
// frozen here; changing them invalidates recorded results.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "CLI11.hpp"

#include "gtf/denoiser.hpp"
#include "gtf/errors.hpp"
#include "gtf/evaluation.hpp"
#include "gtf/gaussian_mixture.hpp"
#include "gtf/guidance.hpp"
#include "gtf/mlp.hpp"
#include "gtf/noise_geometry.hpp"
#include "gtf/rng.hpp"
#include "gtf/sampler.hpp"
#include "gtf/schedule.hpp"
#include "gtf/types.hpp"
#include "gtf/weight_schedulers.hpp"

namespace {

namespace fs = std::filesystem;

class Timer {
 public:
  Timer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    const auto now = std::chrono::steady_clock::now();
    return std::chrono::duration<double>(now - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

int report(int n, bool pass, const std::string& detail) {
  std::printf("criterion %d: %s %s\n", n, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  return pass ? 0 : 1;
}

gtf::GaussianComponent<double> iso2(double mx, double my, double vx, double vy, double w = 1.0) {
  gtf::GaussianComponent<double> c;
  c.mean = Eigen::Vector2d(mx, my);
  c.variance = Eigen::Vector2d(vx, vy);
  c.weight = w;
  return c;
}

Eigen::Vector2d normal2(gtf::Rng& rng, double scale) {
  return Eigen::Vector2d(scale * rng.normal(), scale * rng.normal());
}

// epsilon prediction derived from the exact score of the noised field, checked
// against a central finite difference of the log density.
int criterion1() {
  const Timer timer;
  const gtf::AnalyticWorld<double> world = gtf::demo_world();
  const gtf::NoiseSchedule sched = gtf::build_schedule(1000, 1e-4, 0.02);
  const gtf::ConditionId ids[4] = {gtf::UNCONDITIONAL, gtf::ConditionId{0}, gtf::ConditionId{1},
                                   gtf::ConditionId{2}};
  const double h = 1e-4;
  gtf::Rng rng(101);
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const Eigen::Vector2d x = normal2(rng, 3.0);
    const int t = 1 + std::min(static_cast<int>(rng.uniform() * 1000.0), 999);
    const gtf::ConditionId c = ids[std::min(static_cast<int>(rng.uniform() * 4.0), 3)];
    const auto noised =
        gtf::noised_mixture(world.distribution(c), sched.alpha_bar_at(t));
    const double sigma = sched.sigma_at(t);
    Eigen::Vector2d eps_fd;
    for (int k = 0; k < 2; ++k) {
      Eigen::Vector2d hi = x;
      Eigen::Vector2d lo = x;
      hi[k] += h;
      lo[k] -= h;
      eps_fd[k] = -sigma * (gtf::log_density(noised, hi) - gtf::log_density(noised, lo)) / (2.0 * h);
    }
    const Eigen::Vector2d eps = gtf::exact_epsilon(world, sched, x, t, c);
    const double rel = (eps_fd - eps).norm() / std::max(eps.norm(), 1e-12);
    worst = std::max(worst, rel);
  }
  const double elapsed = timer.seconds();
  const bool pass = worst < 1e-5 && elapsed < 5.0;
  return report(1, pass,
                "max rel err " + fmt(worst) + " (tol 1e-5) over 200 triples, " + fmt(elapsed) +
                    "s (limit 5s)");
}

// Projection decomposition over three dimensionalities: reconstruction,
// orthogonality to the reference, idempotence of the parallel part, and
// invariance under rescaling the reference.
int criterion2() {
  const Timer timer;
  const double tol = 1e-10;
  const int dims[3] = {2, 16, 4096};
  const double betas[3] = {2.0, -0.5, 1000.0};
  double worst = 0.0;
  for (int di = 0; di < 3; ++di) {
    const int d = dims[di];
    gtf::Rng rng(202 + static_cast<std::uint64_t>(d));
    Eigen::VectorXd v(d), onto(d);
    for (int pair = 0; pair < 10000; ++pair) {
      for (int k = 0; k < d; ++k) v[k] = rng.normal();
      for (int k = 0; k < d; ++k) onto[k] = rng.normal();
      const double vn = v.norm();
      const double on = onto.norm();
      const auto parts = gtf::project(v, onto);
      const double recon = (parts.parallel + parts.perpendicular - v).norm() / vn;
      const double ortho = std::abs(parts.perpendicular.dot(onto)) / (vn * on);
      const auto again = gtf::project(parts.parallel, onto);
      const double idem = (again.parallel - parts.parallel).norm() / vn;
      const double idem_res = again.perpendicular.norm() / vn;
      const Eigen::VectorXd scaled_onto = betas[pair % 3] * onto;
      const auto scaled = gtf::project(v, scaled_onto);
      const double scale_inv = (scaled.parallel - parts.parallel).norm() / vn;
      worst = std::max({worst, recon, ortho, idem, idem_res, scale_inv});
    }
  }
  const double elapsed = timer.seconds();
  const bool pass = worst < tol && elapsed < 5.0;
  return report(2, pass,
                "max normalized deviation " + fmt(worst) + " (tol 1e-10) over 3x10000 pairs, " +
                    fmt(elapsed) + "s (limit 5s)");
}

// Composition identity on single-Gaussian worlds at the clean end of the
// chain. At t = 0 every epsilon is exactly zero, so the literal statement is
// checked bitwise and the substantive check runs on the unit-sigma score
// fields the epsilons are proportional to.
int criterion3() {
  const Timer timer;
  const gtf::NoiseSchedule sched = gtf::build_schedule(1000, 1e-4, 0.02);
  gtf::Rng rng(303);
  bool literal_ok = true;
  double worst = 0.0;
  for (int w = 0; w < 5; ++w) {
    Eigen::Vector2d prior_mean, prior_var, src_mean, src_var, tgt_mean, tgt_var;
    for (int k = 0; k < 2; ++k) {
      prior_mean[k] = -1.0 + 2.0 * rng.uniform();
      prior_var[k] = 2.0 + 4.0 * rng.uniform();
      src_mean[k] = -2.0 + 4.0 * rng.uniform();
      src_var[k] = 0.3 + 2.7 * rng.uniform();
      tgt_mean[k] = -2.0 + 4.0 * rng.uniform();
    }
    // Redraw the target variance until the removal compose stays positive
    // definite; addition is positive definite for every draw in these ranges.
    for (;;) {
      bool ok = true;
      for (int k = 0; k < 2; ++k) {
        tgt_var[k] = 0.3 + 2.7 * rng.uniform();
        if (1.0 / src_var[k] + 1.0 / prior_var[k] - 1.0 / tgt_var[k] <= 1e-6) ok = false;
      }
      if (ok) break;
    }
    gtf::AnalyticWorld<double> world;
    world.prior = gtf::make_mixture<double>(
        {iso2(prior_mean[0], prior_mean[1], prior_var[0], prior_var[1])});
    world.conditionals[gtf::ConditionId{0}] =
        gtf::make_mixture<double>({iso2(src_mean[0], src_mean[1], src_var[0], src_var[1])});
    world.conditionals[gtf::ConditionId{1}] =
        gtf::make_mixture<double>({iso2(tgt_mean[0], tgt_mean[1], tgt_var[0], tgt_var[1])});
    world.names = {"s", "t"};

    const auto add_target = gtf::composed_target(world, gtf::ManipulationMode::Addition,
                                                 gtf::ConditionId{0}, gtf::ConditionId{1});
    const auto rem_target = gtf::composed_target(world, gtf::ManipulationMode::Removal,
                                                 gtf::ConditionId{0}, gtf::ConditionId{1});

    for (int p = 0; p < 20; ++p) {
      const Eigen::Vector2d x = normal2(rng, 1.5);

      gtf::GuidanceDeltasd zero;
      zero.unconditional = gtf::exact_epsilon(world, sched, x, 0, gtf::UNCONDITIONAL);
      zero.delta_src =
          gtf::exact_epsilon(world, sched, x, 0, gtf::ConditionId{0}) - zero.unconditional;
      zero.delta_tgt =
          gtf::exact_epsilon(world, sched, x, 0, gtf::ConditionId{1}) - zero.unconditional;
      if (zero.unconditional.norm() != 0.0 || zero.delta_src.norm() != 0.0 ||
          zero.delta_tgt.norm() != 0.0 ||
          gtf::compose_bayes_addition(zero).norm() != 0.0 ||
          gtf::compose_bayes_removal(zero).norm() != 0.0) {
        literal_ok = false;
      }

      gtf::GuidanceDeltasd field;
      field.unconditional = -gtf::score(world.prior, x);
      field.delta_src =
          -gtf::score(world.distribution(gtf::ConditionId{0}), x) - field.unconditional;
      field.delta_tgt =
          -gtf::score(world.distribution(gtf::ConditionId{1}), x) - field.unconditional;

      const Eigen::VectorXd add_expect = -gtf::score(add_target, x);
      const Eigen::VectorXd rem_expect = -gtf::score(rem_target, x);
      const double add_rel = (gtf::compose_bayes_addition(field) - add_expect).norm() /
                             std::max(add_expect.norm(), 1e-12);
      const double rem_rel = (gtf::compose_bayes_removal(field) - rem_expect).norm() /
                             std::max(rem_expect.norm(), 1e-12);
      worst = std::max({worst, add_rel, rem_rel});
    }
  }
  const double elapsed = timer.seconds();
  const bool pass = literal_ok && worst < 1e-8 && elapsed < 1.0;
  return report(3, pass,
                std::string("t=0 compositions exactly zero: ") + (literal_ok ? "yes" : "NO") +
                    ", score-field identity max rel err " + fmt(worst) +
                    " (tol 1e-8) at 100 points, " + fmt(elapsed) + "s (limit 1s)");
}

struct EndToEnd {
  double kl = 0.0;
  double mean_inf = 0.0;
};

EndToEnd run_bayes_endpoint(gtf::ManipulationMode mode, gtf::ConditionId src,
                            gtf::ConditionId tgt) {
  const gtf::AnalyticWorld<double> world = gtf::demo_world();
  const gtf::NoiseSchedule sched = gtf::build_schedule(1000, 1e-4, 0.02);
  const gtf::AnalyticDenoiser den(world, sched);

  gtf::SamplerConfig sc;
  sc.steps = 200;
  sc.method = gtf::SamplerMethod::DDIM;
  sc.ddim_eta = 0.0;
  sc.seed = 42;

  gtf::GuidanceConfig gc;
  gc.mode = mode;
  gc.composition = gtf::CompositionRule::Bayes;

  const Eigen::MatrixXd samples = gtf::sample(den, sched, sc, gc, src, tgt, 50000);
  const auto target = gtf::composed_target(world, mode, src, tgt);

  EndToEnd out;
  const gtf::GridSpec spec;
  out.kl = gtf::grid_kl(gtf::histogram_grid(samples, spec), gtf::density_grid(target, spec));
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  gtf::mixture_moments(target, mean, cov);
  const Eigen::VectorXd sample_mean = samples.colwise().mean();
  out.mean_inf = (sample_mean - mean).lpNorm<Eigen::Infinity>();
  return out;
}

int criterion4() {
  const Timer timer;
  const EndToEnd r = run_bayes_endpoint(gtf::ManipulationMode::Addition, gtf::ConditionId{0},
                                        gtf::ConditionId{1});
  const double elapsed = timer.seconds();
  const bool pass = r.kl < 0.05 && r.mean_inf < 0.05 && elapsed < 120.0;
  return report(4, pass,
                "addition endpoint: grid_kl " + fmt(r.kl) + " (tol 0.05), mean err inf-norm " +
                    fmt(r.mean_inf) + " (tol 0.05), 50000 chains DDIM S=200, " + fmt(elapsed) +
                    "s (limit 120s)");
}

int criterion5() {
  const Timer timer;
  const EndToEnd r = run_bayes_endpoint(gtf::ManipulationMode::Removal, gtf::ConditionId{2},
                                        gtf::ConditionId{1});
  const double elapsed = timer.seconds();
  const bool pass = r.kl < 0.05 && elapsed < 120.0;
  return report(5, pass,
                "removal endpoint: grid_kl " + fmt(r.kl) + " (tol 0.05), mean err inf-norm " +
                    fmt(r.mean_inf) + " (reported), 50000 chains DDIM S=200, " + fmt(elapsed) +
                    "s (limit 120s)");
}

int criterion6() {
  const Timer timer;
  const int T = 1000;
  const double w0 = 1.0;
  bool endpoints = true;
  bool monotone = true;
  bool symmetry = true;
  bool mass_ok = true;
  std::string masses;

  const auto sp = [&](gtf::SchedulerKind k) { return gtf::make_scheduler(k, w0, T); };
  const auto st = sp(gtf::SchedulerKind::Static);
  const auto li = sp(gtf::SchedulerKind::Linear);
  const auto co = sp(gtf::SchedulerKind::Cosine);
  const auto il = sp(gtf::SchedulerKind::InverseLinear);
  const auto si = sp(gtf::SchedulerKind::Sine);

  endpoints = endpoints && gtf::evaluate(st, 0) == w0 && gtf::evaluate(st, T) == w0;
  endpoints = endpoints && gtf::evaluate(li, 0) == 2.0 * w0 && gtf::evaluate(li, T) == 0.0;
  endpoints = endpoints && gtf::evaluate(co, 0) == 2.0 * w0 && gtf::evaluate(co, T) == 0.0;
  endpoints = endpoints && gtf::evaluate(il, 0) == 0.0 && gtf::evaluate(il, T) == 2.0 * w0;
  endpoints = endpoints && gtf::evaluate(si, 0) == 0.0 && gtf::evaluate(si, T) == 2.0 * w0;

  for (int t = 0; t < T; ++t) {
    if (gtf::evaluate(st, t) != w0) monotone = false;
    if (gtf::evaluate(li, t + 1) > gtf::evaluate(li, t) + 1e-12) monotone = false;
    if (gtf::evaluate(co, t + 1) > gtf::evaluate(co, t) + 1e-12) monotone = false;
    if (gtf::evaluate(il, t + 1) < gtf::evaluate(il, t) - 1e-12) monotone = false;
    if (gtf::evaluate(si, t + 1) < gtf::evaluate(si, t) - 1e-12) monotone = false;
  }
  for (int t = 0; t <= T; ++t) {
    if (std::abs(gtf::evaluate(li, t) - gtf::evaluate(il, T - t)) > 1e-12) symmetry = false;
    if (std::abs(gtf::evaluate(co, t) - gtf::evaluate(si, T - t)) > 1e-12) symmetry = false;
  }
  for (const auto& spec : {st, li, co, il, si}) {
    const double m = gtf::discrete_mass(spec);
    const double rel = std::abs(m - w0 * T) / (w0 * T);
    if (rel > 2.0 / T + 1e-12) mass_ok = false;
    if (!masses.empty()) masses += " ";
    masses += std::string(gtf::scheduler_name(spec.kind)) + "=" + fmt(m);
  }

  const double elapsed = timer.seconds();
  const bool pass = endpoints && monotone && symmetry && mass_ok && elapsed < 1.0;
  std::ostringstream os;
  os << "endpoints " << (endpoints ? "exact" : "WRONG") << ", monotonicity "
     << (monotone ? "ok" : "WRONG") << ", symmetry " << (symmetry ? "ok" : "WRONG")
     << ", masses [" << masses << "] vs " << fmt(w0 * T) << " (rel tol 2/T), " << fmt(elapsed)
     << "s (limit 1s)";
  return report(6, pass, os.str());
}

// Shared removal protocol for the scheduler and w2 sweeps: projection-rule
// removal of c2 from the joint on the demo world.
Eigen::MatrixXd removal_samples(const gtf::ConditionedDenoiser& den,
                                const gtf::NoiseSchedule& sched, gtf::SchedulerKind kind,
                                double w0, std::uint64_t seed, int n) {
  gtf::SamplerConfig sc;
  sc.steps = 50;
  sc.method = gtf::SamplerMethod::DDIM;
  sc.ddim_eta = 0.0;
  sc.seed = seed;

  gtf::GuidanceConfig gc;
  gc.mode = gtf::ManipulationMode::Removal;
  gc.composition = gtf::CompositionRule::Projection;
  gc.w1 = 1.0;
  gc.w2 = gtf::make_scheduler(kind, w0, 1000);
  gc.cfg_scale = 7.5;

  return gtf::sample(den, sched, sc, gc, gtf::ConditionId{2}, gtf::ConditionId{1}, n);
}

int criterion7() {
  const Timer timer;
  const gtf::AnalyticWorld<double> world = gtf::demo_world();
  const gtf::NoiseSchedule sched = gtf::build_schedule(1000, 1e-4, 0.02);
  const gtf::AnalyticDenoiser den(world, sched);
  const gtf::GridSpec spec;
  const gtf::Grid2D target = gtf::restrict_halfplane(
      gtf::density_grid(world.distribution(gtf::ConditionId{0}), spec), 0.0);

  const gtf::SchedulerKind kinds[5] = {gtf::SchedulerKind::Static, gtf::SchedulerKind::Linear,
                                       gtf::SchedulerKind::Cosine,
                                       gtf::SchedulerKind::InverseLinear, gtf::SchedulerKind::Sine};
  std::map<gtf::SchedulerKind, double> kl;
  std::string listing;
  for (const auto kind : kinds) {
    const Eigen::MatrixXd samples = removal_samples(den, sched, kind, 0.5, 7, 50000);
    const gtf::Grid2D hist = gtf::restrict_halfplane(gtf::histogram_grid(samples, spec), 0.0);
    kl[kind] = gtf::grid_kl(hist, target);
    if (!listing.empty()) listing += " ";
    listing += std::string(gtf::scheduler_name(kind)) + "=" + fmt(kl[kind]);
  }

  const double late = std::max(kl[gtf::SchedulerKind::Cosine], kl[gtf::SchedulerKind::Linear]);
  const double early =
      std::min(kl[gtf::SchedulerKind::Sine], kl[gtf::SchedulerKind::InverseLinear]);
  const double elapsed = timer.seconds();
  const bool pass = late < early;
  return report(7, pass,
                "half-plane grid_kl [" + listing + "]; max(cosine,linear) " + fmt(late) +
                    " vs min(sine,inverse_linear) " + fmt(early) + ", " + fmt(elapsed) + "s");
}

int criterion8() {
  const Timer timer;
  const gtf::AnalyticWorld<double> world = gtf::demo_world();
  const gtf::NoiseSchedule sched = gtf::build_schedule(1000, 1e-4, 0.02);
  const gtf::AnalyticDenoiser den(world, sched);
  const Eigen::Vector2d removed_mean(2.0, 0.0);
  const double radius = 2.0 * std::sqrt(0.5);

  const double w0s[5] = {0.0, 0.25, 0.5, 1.0, 2.0};
  double masses[5];
  std::string listing;
  for (int i = 0; i < 5; ++i) {
    const Eigen::MatrixXd samples =
        removal_samples(den, sched, gtf::SchedulerKind::Cosine, w0s[i], 8, 50000);
    masses[i] = gtf::mass_within(samples, removed_mean, radius);
    if (!listing.empty()) listing += " ";
    listing += fmt(masses[i]);
  }
  bool monotone = true;
  for (int i = 0; i + 1 < 5; ++i) {
    if (masses[i + 1] > masses[i] + 0.01) monotone = false;
  }
  const double elapsed = timer.seconds();
  return report(8, monotone,
                "removed-component mass across w2 {0,0.25,0.5,1,2}: [" + listing +
                    "] non-increasing within 0.01, " + fmt(elapsed) + "s");
}

int criterion9() {
  const Timer timer;
  const gtf::AnalyticWorld<double> world = gtf::demo_world();
  const gtf::NoiseSchedule sched = gtf::build_schedule(1000, 1e-4, 0.02);

  gtf::Mlp net(gtf::MlpSpec{}, 1000, 5);
  gtf::TrainConfig tc;
  tc.seed = 5;
  // 100 epochs instead of the config default 30: the shorter run leaves enough
  // epsilon error that the cfg-amplified rejection field scatters a large mass
  // fraction back over the removed mode at w2 = 0.25, breaking the ladder.
  tc.epochs = 100;
  const std::vector<double> history = gtf::train(net, world, sched, tc);
  const double first = history.front();
  const double last = history.back();
  const bool halved = last <= 0.5 * first;

  gtf::Rng rng(905);
  const int rows = 256;
  gtf::TrainBatch batch;
  batch.x_t.resize(rows, 2);
  batch.eps.resize(rows, 2);
  batch.t.resize(rows);
  batch.c.resize(rows);
  const gtf::ConditionId ids[4] = {gtf::UNCONDITIONAL, gtf::ConditionId{0}, gtf::ConditionId{1},
                                   gtf::ConditionId{2}};
  for (int r = 0; r < rows; ++r) {
    batch.x_t(r, 0) = 2.5 * rng.normal();
    batch.x_t(r, 1) = 2.5 * rng.normal();
    batch.t[r] = 1 + std::min(static_cast<int>(rng.uniform() * 1000.0), 999);
    batch.c[r] = ids[r % 4];
    batch.eps(r, 0) = rng.normal();
    batch.eps(r, 1) = rng.normal();
  }
  const double grad_err = gtf::gradient_check(net, batch, 64, 7);
  const bool grad_ok = grad_err < 1e-4;

  const Eigen::Vector2d removed_mean(2.0, 0.0);
  const double radius = 2.0 * std::sqrt(0.5);
  const double w0s[5] = {0.0, 0.25, 0.5, 1.0, 2.0};
  double masses[5];
  std::string listing;
  for (int i = 0; i < 5; ++i) {
    const Eigen::MatrixXd samples =
        removal_samples(net, sched, gtf::SchedulerKind::Cosine, w0s[i], 9, 20000);
    masses[i] = gtf::mass_within(samples, removed_mean, radius);
    if (!listing.empty()) listing += " ";
    listing += fmt(masses[i]);
  }
  bool trend = true;
  for (int i = 0; i + 1 < 5; ++i) {
    if (masses[i + 1] > masses[i] + 0.03) trend = false;
  }

  const double elapsed = timer.seconds();
  const bool pass = halved && grad_ok && trend && elapsed < 600.0;
  std::ostringstream os;
  os << "loss " << fmt(first) << " -> " << fmt(last) << (halved ? " (halved)" : " (NOT halved)")
     << ", grad check max rel err " << fmt(grad_err) << " (tol 1e-4)"
     << ", trained-net removal masses [" << listing << "] "
     << (trend ? "non-increasing within 0.03" : "NOT monotone within 0.03") << ", " << fmt(elapsed)
     << "s (limit 600s)";
  return report(9, pass, os.str());
}

std::string slurp(const fs::path& p, bool* ok) {
  std::ifstream in(p, std::ios::binary);
  if (!in.good()) {
    *ok = false;
    return {};
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int criterion10(const std::string& gtf_bin) {
  const Timer timer;
  if (gtf_bin.empty()) {
    return report(10, false, "no --gtf-bin path supplied");
  }
  const fs::path root = fs::temp_directory_path() / "gtf_acceptance_c10";
  std::error_code ec;
  fs::remove_all(root, ec);
  fs::create_directories(root);
  const fs::path cfg_path = root / "config.json";
  {
    std::ofstream out(cfg_path);
    out << R"({"world": "demo",)"
        << R"( "sampler": {"steps": 10, "seed": 123, "n_samples": 2000},)"
        << R"( "sweep": {"axis": "w2", "values": [0, 0.5]}})" << "\n";
  }
  const fs::path out_a = root / "a";
  const fs::path out_b = root / "b";
  const std::string base = "\"" + gtf_bin + "\" run --config \"" + cfg_path.string() + "\" --out ";
  const int rc_a = std::system((base + "\"" + out_a.string() + "\"").c_str());
  const int rc_b = std::system((base + "\"" + out_b.string() + "\"").c_str());
  if (rc_a != 0 || rc_b != 0) {
    return report(10, false,
                  "gtf run exit codes " + std::to_string(rc_a) + " and " + std::to_string(rc_b));
  }
  bool ok = true;
  bool identical = true;
  std::string compared;
  for (const char* name : {"metrics.csv", "samples_run000.csv", "samples_run001.csv"}) {
    const std::string a = slurp(out_a / name, &ok);
    const std::string b = slurp(out_b / name, &ok);
    const bool same = ok && !a.empty() && a == b;
    identical = identical && same;
    if (!compared.empty()) compared += " ";
    compared += std::string(name) + (same ? "=identical" : "=DIFFERS");
  }
  fs::remove_all(root, ec);
  const double elapsed = timer.seconds();
  return report(10, ok && identical, compared + ", " + fmt(elapsed) + "s");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria runner"};
  int criterion = 0;
  std::string gtf_bin;
  app.add_option("--criterion", criterion, "criterion number to run")
      ->required()
      ->check(CLI::Range(1, 10));
  app.add_option("--gtf-bin", gtf_bin, "path to the gtf binary (criterion 10)");
  CLI11_PARSE(app, argc, argv);

  try {
    switch (criterion) {
      case 1: return criterion1();
      case 2: return criterion2();
      case 3: return criterion3();
      case 4: return criterion4();
      case 5: return criterion5();
      case 6: return criterion6();
      case 7: return criterion7();
      case 8: return criterion8();
      case 9: return criterion9();
      case 10: return criterion10(gtf_bin);
      default: break;
    }
  } catch (const std::exception& e) {
    return report(criterion, false, std::string("unexpected exception: ") + e.what());
  }
  return 1;
}
