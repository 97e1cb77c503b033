#include "gtf/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "gtf/errors.hpp"
#include "gtf/rng.hpp"

namespace gtf {
namespace {

constexpr double kSmoothing = 1e-9;

void check_spec(const GridSpec& spec) {
  const bool bounds_ok = std::isfinite(spec.x_min) && std::isfinite(spec.x_max) &&
                         std::isfinite(spec.y_min) && std::isfinite(spec.y_max) &&
                         spec.x_min < spec.x_max && spec.y_min < spec.y_max;
  if (!bounds_ok) throw ValidationError("grid bounds must be finite and ordered");
  if (spec.resolution < 8) throw ValidationError("grid resolution must be at least 8");
}

// Exact W1 between two 1-D empirical distributions: integrate |F_a - F_b|
// over the merged sorted support.
double wasserstein1(std::vector<double>& a, std::vector<double>& b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double wa = 1.0 / static_cast<double>(a.size());
  const double wb = 1.0 / static_cast<double>(b.size());
  std::size_t ia = 0;
  std::size_t ib = 0;
  double fa = 0.0;
  double fb = 0.0;
  double prev = 0.0;
  double total = 0.0;
  bool first = true;
  while (ia < a.size() || ib < b.size()) {
    const double x = (ib >= b.size() || (ia < a.size() && a[ia] <= b[ib])) ? a[ia] : b[ib];
    if (!first) total += std::abs(fa - fb) * (x - prev);
    while (ia < a.size() && a[ia] == x) {
      fa += wa;
      ++ia;
    }
    while (ib < b.size() && b[ib] == x) {
      fb += wb;
      ++ib;
    }
    prev = x;
    first = false;
  }
  return total;
}

}  // namespace

double Grid2D::cell_x(int ix) const {
  const double dx = (spec.x_max - spec.x_min) / spec.resolution;
  return spec.x_min + (ix + 0.5) * dx;
}

double Grid2D::cell_y(int iy) const {
  const double dy = (spec.y_max - spec.y_min) / spec.resolution;
  return spec.y_min + (iy + 0.5) * dy;
}

Grid2D density_grid(const GaussianMixture<double>& m, const GridSpec& spec) {
  check_spec(spec);
  if (m.dim() != 2) throw DimensionUnsupported("density_grid requires a 2-D mixture");
  Grid2D g;
  g.spec = spec;
  g.prob.resize(spec.resolution, spec.resolution);
  for (int iy = 0; iy < spec.resolution; ++iy) {
    for (int ix = 0; ix < spec.resolution; ++ix) {
      g.prob(iy, ix) = std::exp(log_density(m, Eigen::Vector2d(g.cell_x(ix), g.cell_y(iy))));
    }
  }
  const double total = g.prob.sum();
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw ValidationError("density_grid: mixture carries no mass on the grid");
  }
  g.prob /= total;
  return g;
}

Grid2D histogram_grid(const Eigen::MatrixXd& samples, const GridSpec& spec,
                      std::int64_t* clamped) {
  check_spec(spec);
  if (samples.rows() < 1) throw ValidationError("histogram_grid needs at least one sample");
  if (samples.cols() != 2) throw DimensionUnsupported("histogram_grid requires 2-D samples");
  Grid2D g;
  g.spec = spec;
  g.prob = Eigen::MatrixXd::Zero(spec.resolution, spec.resolution);
  const double dx = (spec.x_max - spec.x_min) / spec.resolution;
  const double dy = (spec.y_max - spec.y_min) / spec.resolution;
  std::int64_t clamp_count = 0;
  for (Eigen::Index r = 0; r < samples.rows(); ++r) {
    int ix = static_cast<int>(std::floor((samples(r, 0) - spec.x_min) / dx));
    int iy = static_cast<int>(std::floor((samples(r, 1) - spec.y_min) / dy));
    const bool outside = ix < 0 || ix >= spec.resolution || iy < 0 || iy >= spec.resolution;
    if (outside) ++clamp_count;
    ix = std::clamp(ix, 0, spec.resolution - 1);
    iy = std::clamp(iy, 0, spec.resolution - 1);
    g.prob(iy, ix) += 1.0;
  }
  g.prob /= static_cast<double>(samples.rows());
  if (clamped != nullptr) *clamped = clamp_count;
  return g;
}

double grid_kl(const Grid2D& p, const Grid2D& q) {
  if (!(p.spec == q.spec)) throw SpecMismatch("grid_kl requires identical grid specs");
  Eigen::MatrixXd qs = (q.prob.array() + kSmoothing).matrix();
  qs /= qs.sum();
  double kl = 0.0;
  for (Eigen::Index i = 0; i < p.prob.size(); ++i) {
    const double pi = p.prob(i);
    if (pi > 0.0) kl += pi * std::log(pi / qs(i));
  }
  return kl;
}

Grid2D restrict_halfplane(const Grid2D& g, double x_keep_max) {
  Grid2D out = g;
  for (int ix = 0; ix < g.spec.resolution; ++ix) {
    if (g.cell_x(ix) > x_keep_max) out.prob.col(ix).setZero();
  }
  const double total = out.prob.sum();
  if (!(total > 0.0)) throw ValidationError("restrict_halfplane removed all mass");
  out.prob /= total;
  return out;
}

Eigen::Vector2d grid_mean(const Grid2D& g) {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (int iy = 0; iy < g.spec.resolution; ++iy) {
    for (int ix = 0; ix < g.spec.resolution; ++ix) {
      mean += g.prob(iy, ix) * Eigen::Vector2d(g.cell_x(ix), g.cell_y(iy));
    }
  }
  return mean;
}

double sliced_wasserstein(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, int n_projections,
                          std::uint64_t seed) {
  if (a.rows() < 1 || b.rows() < 1) {
    throw ValidationError("sliced_wasserstein requires non-empty sample sets");
  }
  if (a.cols() != b.cols()) throw DimensionMismatch("sliced_wasserstein: dimension mismatch");
  if (n_projections < 1) throw InvalidRange("sliced_wasserstein: n_projections must be >= 1");

  Rng rng(derive_stream_seed(seed, 0x51cedULL));
  const Eigen::Index d = a.cols();
  double total = 0.0;
  std::vector<double> pa(static_cast<std::size_t>(a.rows()));
  std::vector<double> pb(static_cast<std::size_t>(b.rows()));
  for (int p = 0; p < n_projections; ++p) {
    Eigen::VectorXd dir(d);
    double norm = 0.0;
    do {
      for (Eigen::Index i = 0; i < d; ++i) dir[i] = rng.normal();
      norm = dir.norm();
    } while (norm < 1e-12);
    dir /= norm;
    Eigen::Map<Eigen::VectorXd>(pa.data(), a.rows()) = a * dir;
    Eigen::Map<Eigen::VectorXd>(pb.data(), b.rows()) = b * dir;
    total += wasserstein1(pa, pb);
  }
  return total / n_projections;
}

MomentReport moment_report(const Eigen::MatrixXd& samples, const GaussianMixture<double>& target) {
  if (samples.rows() < 1) throw ValidationError("moment_report needs at least one sample");
  if (samples.cols() != target.dim()) throw DimensionMismatch("moment_report: dimension mismatch");

  Eigen::VectorXd target_mean;
  Eigen::MatrixXd target_cov;
  mixture_moments(target, target_mean, target_cov);

  MomentReport report;
  const Eigen::VectorXd sample_mean = samples.colwise().mean().transpose();
  report.mean_error = sample_mean - target_mean;
  if (samples.rows() >= 2) {
    const Eigen::MatrixXd centered = samples.rowwise() - sample_mean.transpose();
    const Eigen::MatrixXd sample_cov =
        centered.transpose() * centered / static_cast<double>(samples.rows() - 1);
    report.cov_error = (sample_cov - target_cov).norm();
    report.cov_valid = true;
  }
  return report;
}

double mass_within(const Eigen::MatrixXd& samples, const Eigen::VectorXd& center, double radius) {
  if (samples.rows() < 1) throw ValidationError("mass_within needs at least one sample");
  if (samples.cols() != center.size()) throw DimensionMismatch("mass_within: dimension mismatch");
  const Eigen::ArrayXd dist =
      (samples.rowwise() - center.transpose()).rowwise().norm().array();
  return static_cast<double>((dist <= radius).count()) / static_cast<double>(samples.rows());
}

}  // namespace gtf
