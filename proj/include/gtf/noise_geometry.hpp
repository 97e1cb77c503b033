#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "gtf/errors.hpp"

namespace gtf {

enum class ManipulationMode { Addition, Removal };

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Reference directions with norm at or below this threshold cannot define a
// projection; scales with dimension so the guard stays far below realistic
// guidance magnitudes.
template <typename Scalar>
Scalar epsilon_norm(Eigen::Index dimension) {
  return Scalar(1e-8) * std::sqrt(static_cast<Scalar>(dimension));
}

template <typename Scalar>
struct ProjectionParts {
  VectorX<Scalar> parallel;
  VectorX<Scalar> perpendicular;
};

template <typename Scalar>
struct GuidanceDeltas {
  VectorX<Scalar> unconditional;  // eps(empty)
  VectorX<Scalar> delta_src;      // eps(c_src) - eps(empty)
  VectorX<Scalar> delta_tgt;      // eps(c_tgt) - eps(empty)
};

namespace detail {

template <typename D1, typename D2>
void require_same_dim(const Eigen::MatrixBase<D1>& a, const Eigen::MatrixBase<D2>& b) {
  if (a.size() != b.size()) {
    throw DimensionMismatch("vector dimensions differ: " + std::to_string(a.size()) +
                            " vs " + std::to_string(b.size()));
  }
}

template <typename Scalar>
void require_same_dim(const GuidanceDeltas<Scalar>& d) {
  require_same_dim(d.unconditional, d.delta_src);
  require_same_dim(d.unconditional, d.delta_tgt);
}

}  // namespace detail

template <typename D1, typename D2>
ProjectionParts<typename D1::Scalar> project(const Eigen::MatrixBase<D1>& v,
                                             const Eigen::MatrixBase<D2>& onto) {
  using Scalar = typename D1::Scalar;
  detail::require_same_dim(v, onto);
  const Scalar onto_norm = onto.norm();
  if (onto_norm <= epsilon_norm<Scalar>(onto.size())) {
    throw DegenerateReference("projection reference norm " + std::to_string(onto_norm) +
                              " is below the degeneracy threshold");
  }
  ProjectionParts<Scalar> parts;
  parts.parallel = (v.dot(onto) / (onto_norm * onto_norm)) * onto;
  parts.perpendicular = v - parts.parallel;
  return parts;
}

// eps_add = w1 * eps_src + w2 * eps_tgt_perp. The w2 = 0 form skips the
// projection entirely so a vanishing source delta stays usable on the plain
// CFG path.
template <typename Scalar>
VectorX<Scalar> compose_addition(const GuidanceDeltas<Scalar>& deltas, Scalar w1, Scalar w2) {
  detail::require_same_dim(deltas);
  if (w2 == Scalar(0)) {
    return w1 * deltas.delta_src;
  }
  const auto parts = project(deltas.delta_tgt, deltas.delta_src);
  return w1 * deltas.delta_src + w2 * parts.perpendicular;
}

// eps_remove = w1 * eps_src_perp - w2 * eps_src_par, decomposed w.r.t. the
// target delta; w2 = 0 leaves the pure rejection.
template <typename Scalar>
VectorX<Scalar> compose_removal(const GuidanceDeltas<Scalar>& deltas, Scalar w1, Scalar w2) {
  detail::require_same_dim(deltas);
  const auto parts = project(deltas.delta_src, deltas.delta_tgt);
  return w1 * parts.perpendicular - w2 * parts.parallel;
}

template <typename Scalar>
VectorX<Scalar> compose_bayes_addition(const GuidanceDeltas<Scalar>& deltas) {
  detail::require_same_dim(deltas);
  return deltas.unconditional + deltas.delta_src + deltas.delta_tgt;
}

template <typename Scalar>
VectorX<Scalar> compose_bayes_removal(const GuidanceDeltas<Scalar>& deltas) {
  detail::require_same_dim(deltas);
  return deltas.unconditional + deltas.delta_src - deltas.delta_tgt;
}

template <typename Scalar>
VectorX<Scalar> assemble_guidance(const GuidanceDeltas<Scalar>& deltas, ManipulationMode mode,
                                  Scalar w1, Scalar w2, Scalar cfg_scale) {
  if (!std::isfinite(w1) || !std::isfinite(w2)) {
    throw InvalidRange("guidance weights must be finite");
  }
  if (!(cfg_scale > Scalar(0))) {
    throw InvalidRange("cfg_scale must be positive");
  }
  const VectorX<Scalar> composed = mode == ManipulationMode::Addition
                                       ? compose_addition(deltas, w1, w2)
                                       : compose_removal(deltas, w1, w2);
  return deltas.unconditional + cfg_scale * composed;
}

using GuidanceDeltasd = GuidanceDeltas<double>;

}  // namespace gtf
