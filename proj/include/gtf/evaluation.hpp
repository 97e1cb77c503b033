#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "gtf/gaussian_mixture.hpp"

namespace gtf {

struct GridSpec {
  double x_min = -6.0;
  double x_max = 6.0;
  double y_min = -6.0;
  double y_max = 6.0;
  int resolution = 64;  // cells per axis

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

// Normalized cell probabilities over a rectangular 2-D grid. prob(iy, ix)
// covers the cell whose center is (x_min + (ix+0.5)dx, y_min + (iy+0.5)dy).
struct Grid2D {
  GridSpec spec;
  Eigen::MatrixXd prob;

  double cell_x(int ix) const;
  double cell_y(int iy) const;
};

struct MomentReport {
  Eigen::VectorXd mean_error;  // sample mean minus exact mixture mean
  double cov_error = 0.0;      // Frobenius norm of the covariance gap
  bool cov_valid = false;      // false when too few samples for a covariance
};

struct MetricReport {
  double grid_kl = 0.0;
  double sliced_wasserstein = 0.0;
  Eigen::VectorXd mean_error;
  double cov_error = 0.0;
};

// Exact cell masses of a 2-D mixture: density at cell centers times cell
// area, renormalized to sum 1.
Grid2D density_grid(const GaussianMixture<double>& m, const GridSpec& spec);

// Normalized 2-D histogram of row-stacked samples. Out-of-bounds samples
// clamp to edge cells; the clamp count is reported through `clamped`.
Grid2D histogram_grid(const Eigen::MatrixXd& samples, const GridSpec& spec,
                      std::int64_t* clamped = nullptr);

// KL(p || q) over cells with additive smoothing 1e-9 applied to q followed
// by renormalization of q.
double grid_kl(const Grid2D& p, const Grid2D& q);

// Zeroes all cells whose center x exceeds x_keep_max, then renormalizes.
Grid2D restrict_halfplane(const Grid2D& g, double x_keep_max);

Eigen::Vector2d grid_mean(const Grid2D& g);

// Mean over seeded random unit directions of the exact 1-D Wasserstein-1
// distance between the projected sample sets.
double sliced_wasserstein(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, int n_projections,
                          std::uint64_t seed);

MomentReport moment_report(const Eigen::MatrixXd& samples, const GaussianMixture<double>& target);

// Fraction of samples within `radius` of `center` in Euclidean norm.
double mass_within(const Eigen::MatrixXd& samples, const Eigen::VectorXd& center, double radius);

}  // namespace gtf
