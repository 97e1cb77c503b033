#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "gtf/denoiser.hpp"
#include "gtf/errors.hpp"
#include "gtf/noise_geometry.hpp"
#include "gtf/rng.hpp"
#include "gtf/schedule.hpp"
#include "gtf/types.hpp"

namespace gtf {

// Diagonal-covariance Gaussian mixtures with exact densities, scores, and
// precision-space fusion. These provide ground-truth denoisers and composed
// target distributions for the guidance engine.

template <typename Scalar>
struct GaussianComponent {
  Scalar weight = Scalar(1);
  VectorX<Scalar> mean;
  VectorX<Scalar> variance;  // diagonal of the covariance
};

template <typename Scalar>
struct GaussianMixture {
  std::vector<GaussianComponent<Scalar>> components;

  Eigen::Index dim() const { return components.empty() ? 0 : components.front().mean.size(); }
};

template <typename Scalar>
GaussianMixture<Scalar> make_mixture(std::vector<GaussianComponent<Scalar>> components) {
  if (components.empty()) throw ValidationError("mixture needs at least one component");
  const Eigen::Index d = components.front().mean.size();
  if (d < 1) throw ValidationError("mixture components need dimension >= 1");
  Scalar total = Scalar(0);
  for (const auto& c : components) {
    if (c.mean.size() != d || c.variance.size() != d) {
      throw DimensionMismatch("mixture components disagree on dimension");
    }
    if (!(c.weight > Scalar(0)) || !std::isfinite(static_cast<double>(c.weight))) {
      throw ValidationError("component weights must be positive and finite");
    }
    if (!(c.variance.minCoeff() > Scalar(0)) || !c.variance.allFinite()) {
      throw ValidationError("component variances must be positive and finite");
    }
    total += c.weight;
  }
  for (auto& c : components) c.weight /= total;
  GaussianMixture<Scalar> m;
  m.components = std::move(components);
  return m;
}

// Gaussian convolution closure of the forward process: each component
// (w, mu, Sigma) maps to (w, sqrt(a)*mu, a*Sigma + (1-a)*I).
template <typename Scalar>
GaussianMixture<Scalar> noised_mixture(const GaussianMixture<Scalar>& m, Scalar alpha_bar_t) {
  if (!(alpha_bar_t > Scalar(0)) || !(alpha_bar_t <= Scalar(1))) {
    throw InvalidRange("noised_mixture: alpha_bar_t must lie in (0, 1]");
  }
  GaussianMixture<Scalar> out = m;
  const Scalar root = std::sqrt(alpha_bar_t);
  for (auto& c : out.components) {
    c.mean *= root;
    c.variance = alpha_bar_t * c.variance.array() + (Scalar(1) - alpha_bar_t);
  }
  return out;
}

namespace detail {

// Per-component log w_k + log N(x; mu_k, Sigma_k).
template <typename Scalar, typename Derived>
VectorX<Scalar> component_logits(const GaussianMixture<Scalar>& m,
                                 const Eigen::MatrixBase<Derived>& x) {
  if (x.size() != m.dim()) throw DimensionMismatch("mixture/point dimension mismatch");
  constexpr Scalar kLog2Pi = Scalar(1.8378770664093454836L);
  VectorX<Scalar> logits(static_cast<Eigen::Index>(m.components.size()));
  for (std::size_t k = 0; k < m.components.size(); ++k) {
    const auto& c = m.components[k];
    const Scalar quad = ((x.derived() - c.mean).array().square() / c.variance.array()).sum();
    const Scalar log_det = c.variance.array().log().sum();
    logits[static_cast<Eigen::Index>(k)] =
        std::log(c.weight) -
        Scalar(0.5) * (quad + log_det + kLog2Pi * static_cast<Scalar>(c.mean.size()));
  }
  return logits;
}

}  // namespace detail

template <typename Scalar, typename Derived>
Scalar log_density(const GaussianMixture<Scalar>& m, const Eigen::MatrixBase<Derived>& x) {
  const VectorX<Scalar> logits = detail::component_logits(m, x);
  const Scalar shift = logits.maxCoeff();
  if (!std::isfinite(static_cast<double>(shift))) {
    return -std::numeric_limits<Scalar>::max();
  }
  return shift + std::log((logits.array() - shift).exp().sum());
}

// Exact mixture score: sum_k r_k(x) * (mu_k - x) / sigma_k^2 with stable
// responsibilities r_k.
template <typename Scalar, typename Derived>
VectorX<Scalar> score(const GaussianMixture<Scalar>& m, const Eigen::MatrixBase<Derived>& x) {
  VectorX<Scalar> logits = detail::component_logits(m, x);
  const Scalar shift = logits.maxCoeff();
  VectorX<Scalar> resp = (logits.array() - shift).exp();
  resp /= resp.sum();
  VectorX<Scalar> grad = VectorX<Scalar>::Zero(x.size());
  for (std::size_t k = 0; k < m.components.size(); ++k) {
    const auto& c = m.components[k];
    grad += resp[static_cast<Eigen::Index>(k)] *
            ((c.mean - x.derived()).array() / c.variance.array()).matrix();
  }
  return grad;
}

// Mixture mean and full covariance (components are diagonal, the mixture
// covariance is not).
template <typename Scalar>
void mixture_moments(const GaussianMixture<Scalar>& m, VectorX<Scalar>& mean,
                     Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& cov) {
  const Eigen::Index d = m.dim();
  mean = VectorX<Scalar>::Zero(d);
  for (const auto& c : m.components) mean += c.weight * c.mean;
  cov.setZero(d, d);
  for (const auto& c : m.components) {
    const VectorX<Scalar> off = c.mean - mean;
    cov += c.weight * (off * off.transpose());
    cov.diagonal() += c.weight * c.variance;
  }
}

template <typename Scalar>
VectorX<Scalar> draw_sample(const GaussianMixture<Scalar>& m, Rng& rng) {
  double u = rng.uniform();
  std::size_t pick = m.components.size() - 1;
  double acc = 0.0;
  for (std::size_t k = 0; k < m.components.size(); ++k) {
    acc += static_cast<double>(m.components[k].weight);
    if (u <= acc) {
      pick = k;
      break;
    }
  }
  const auto& c = m.components[pick];
  VectorX<Scalar> x(c.mean.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    x[i] = c.mean[i] + std::sqrt(c.variance[i]) * static_cast<Scalar>(rng.normal());
  }
  return x;
}

// Precision-weighted fusion of two diagonal Gaussians. The result weight is
// left unnormalized; callers renormalize through make_mixture.
template <typename Scalar>
GaussianComponent<Scalar> product_gaussian(const GaussianComponent<Scalar>& a,
                                           const GaussianComponent<Scalar>& b) {
  if (a.mean.size() != b.mean.size()) {
    throw DimensionMismatch("product_gaussian: dimension mismatch");
  }
  const VectorX<Scalar> lam = (Scalar(1) / a.variance.array() + Scalar(1) / b.variance.array());
  if (!(lam.minCoeff() > Scalar(0))) {
    throw IndefinitePrecision("product_gaussian: fused precision not positive definite");
  }
  GaussianComponent<Scalar> out;
  out.weight = a.weight * b.weight;
  out.variance = lam.cwiseInverse();
  out.mean = out.variance.array() *
             (a.mean.array() / a.variance.array() + b.mean.array() / b.variance.array());
  return out;
}

template <typename Scalar>
struct AnalyticWorld {
  GaussianMixture<Scalar> prior;
  std::map<ConditionId, GaussianMixture<Scalar>> conditionals;
  std::vector<std::string> names;  // names[i] labels ConditionId{i}

  Eigen::Index dim() const { return prior.dim(); }

  const GaussianMixture<Scalar>& distribution(ConditionId c) const {
    if (c == UNCONDITIONAL) return prior;
    const auto it = conditionals.find(c);
    if (it == conditionals.end()) throw UnknownCondition("condition id not present in world");
    return it->second;
  }
};

// Exact epsilon-prediction: eps = -sigma_t * score of the noised conditional.
template <typename Scalar, typename Derived>
VectorX<Scalar> exact_epsilon(const AnalyticWorld<Scalar>& world, const NoiseSchedule& sched,
                              const Eigen::MatrixBase<Derived>& x, int t, ConditionId c) {
  const GaussianMixture<Scalar>& dist = world.distribution(c);
  const double a = sched.alpha_bar_at(t);
  const Scalar sigma = static_cast<Scalar>(sched.sigma_at(t));
  if (sigma == Scalar(0)) return VectorX<Scalar>::Zero(x.size());
  return -sigma * score(noised_mixture(dist, static_cast<Scalar>(a)), x);
}

namespace detail {

// Signed precision-space fusion used by the Bayes composition targets.
template <typename Scalar>
GaussianComponent<Scalar> fuse_three(const GaussianComponent<Scalar>& p,
                                     const GaussianComponent<Scalar>& q,
                                     const GaussianComponent<Scalar>& neg) {
  const VectorX<Scalar> lam = (Scalar(1) / p.variance.array() + Scalar(1) / q.variance.array() -
                               Scalar(1) / neg.variance.array());
  if (!(lam.minCoeff() > Scalar(0))) {
    throw IndefinitePrecision("composed_target: resulting precision not positive definite");
  }
  GaussianComponent<Scalar> out;
  out.weight = Scalar(1);
  out.variance = lam.cwiseInverse();
  out.mean = out.variance.array() *
             (p.mean.array() / p.variance.array() + q.mean.array() / q.variance.array() -
              neg.mean.array() / neg.variance.array());
  return out;
}

template <typename Scalar>
const GaussianComponent<Scalar>& sole_component(const GaussianMixture<Scalar>& m,
                                                const char* what) {
  if (m.components.size() != 1) {
    throw UnsupportedComposition(std::string("composed_target: ") + what +
                                 " must be a single Gaussian");
  }
  return m.components.front();
}

}  // namespace detail

// Ground-truth Bayes composition. Addition yields the product-quotient
// p(x)*[p(x|src)/p(x)]*[p(x|tgt)/p(x)]; Removal inverts it, recovering the
// residual conditional from the joint and the removed semantic.
template <typename Scalar>
GaussianMixture<Scalar> composed_target(const AnalyticWorld<Scalar>& world, ManipulationMode mode,
                                        ConditionId src, ConditionId tgt) {
  const auto& prior = detail::sole_component(world.prior, "prior");
  const auto& s = detail::sole_component(world.distribution(src), "source conditional");
  const auto& t = detail::sole_component(world.distribution(tgt), "target conditional");
  GaussianComponent<Scalar> fused = mode == ManipulationMode::Addition
                                        ? detail::fuse_three(s, t, prior)
                                        : detail::fuse_three(s, prior, t);
  return make_mixture<Scalar>({std::move(fused)});
}

inline AnalyticWorld<double> demo_world() {
  auto iso = [](double x, double y, double var) {
    GaussianComponent<double> c;
    c.mean = Eigen::Vector2d(x, y);
    c.variance = Eigen::Vector2d(var, var);
    return c;
  };
  AnalyticWorld<double> world;
  world.prior = make_mixture<double>({iso(0.0, 0.0, 4.0)});
  world.names = {"c1", "c2", "joint"};
  world.conditionals[ConditionId{0}] = make_mixture<double>({iso(-2.0, 0.0, 0.5)});
  world.conditionals[ConditionId{1}] = make_mixture<double>({iso(2.0, 0.0, 0.5)});
  world.conditionals[ConditionId{2}] =
      composed_target(world, ManipulationMode::Addition, ConditionId{0}, ConditionId{1});
  return world;
}

// ConditionedDenoiser view of an analytic world: noised conditionals are
// precomputed per (condition, timestep), so queries are read-only.
class AnalyticDenoiser final : public ConditionedDenoiser {
 public:
  AnalyticDenoiser(AnalyticWorld<double> world, NoiseSchedule sched)
      : world_(std::move(world)), sched_(std::move(sched)), dim_(static_cast<int>(world_.dim())) {
    table_.emplace(UNCONDITIONAL, noised_table(world_.prior));
    for (const auto& [id, m] : world_.conditionals) table_.emplace(id, noised_table(m));
  }

  int dimension() const override { return dim_; }

  const AnalyticWorld<double>& world() const { return world_; }
  const NoiseSchedule& schedule() const { return sched_; }

  NoiseVector predict(const NoiseVector& x, int t, ConditionId c) const override {
    const GaussianMixture<double>& m = lookup(c, t);
    const double sigma = sched_.sigma_at(t);
    if (sigma == 0.0) return NoiseVector::Zero(x.size());
    return -sigma * score(m, x);
  }

  Eigen::MatrixXd predict_batch(const Eigen::MatrixXd& x_rows, int t,
                                ConditionId c) const override {
    const GaussianMixture<double>& m = lookup(c, t);
    const double sigma = sched_.sigma_at(t);
    if (x_rows.cols() != dim_) throw DimensionMismatch("predict_batch: dimension mismatch");
    if (sigma == 0.0) return Eigen::MatrixXd::Zero(x_rows.rows(), x_rows.cols());

    const auto n = x_rows.rows();
    const auto n_comp = static_cast<Eigen::Index>(m.components.size());
    constexpr double kLog2Pi = 1.8378770664093454836;

    Eigen::MatrixXd logits(n, n_comp);
    for (Eigen::Index k = 0; k < n_comp; ++k) {
      const auto& c_k = m.components[static_cast<std::size_t>(k)];
      const Eigen::MatrixXd centered = x_rows.rowwise() - c_k.mean.transpose();
      const Eigen::ArrayXd quad =
          (centered.array().square().rowwise() / c_k.variance.transpose().array()).rowwise().sum();
      const double log_norm = std::log(c_k.weight) -
                              0.5 * (c_k.variance.array().log().sum() + kLog2Pi * dim_);
      logits.col(k) = (log_norm - 0.5 * quad).matrix();
    }
    const Eigen::ArrayXd shift = logits.rowwise().maxCoeff().array();
    Eigen::ArrayXXd resp = (logits.array().colwise() - shift).exp();
    const Eigen::ArrayXd norm = resp.rowwise().sum();
    resp.colwise() /= norm;

    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(n, dim_);
    for (Eigen::Index k = 0; k < n_comp; ++k) {
      const auto& c_k = m.components[static_cast<std::size_t>(k)];
      Eigen::ArrayXXd pull =
          ((-x_rows).rowwise() + c_k.mean.transpose()).array().rowwise() /
          c_k.variance.transpose().array();
      grad.array() += pull.colwise() * resp.col(k);
    }
    return -sigma * grad;
  }

 private:
  std::vector<GaussianMixture<double>> noised_table(const GaussianMixture<double>& m) const {
    std::vector<GaussianMixture<double>> per_t;
    per_t.reserve(static_cast<std::size_t>(sched_.T) + 1);
    for (int t = 0; t <= sched_.T; ++t) {
      per_t.push_back(noised_mixture(m, sched_.alpha_bar_at(t)));
    }
    return per_t;
  }

  const GaussianMixture<double>& lookup(ConditionId c, int t) const {
    const auto it = table_.find(c);
    if (it == table_.end()) throw UnknownCondition("condition id not present in world");
    if (t < 0 || t > sched_.T) throw OutOfRange("predict: t must lie in [0, T]");
    return it->second[static_cast<std::size_t>(t)];
  }

  AnalyticWorld<double> world_;
  NoiseSchedule sched_;
  int dim_;
  std::map<ConditionId, std::vector<GaussianMixture<double>>> table_;
};

}  // namespace gtf
