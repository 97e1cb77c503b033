#include "gtf/guidance.hpp"

#include <string>

#include "gtf/errors.hpp"

namespace gtf {

namespace {

void require_conditions(ConditionId src, ConditionId tgt) {
  if (src == UNCONDITIONAL || tgt == UNCONDITIONAL) {
    throw ValidationError("guidance source and target must be real conditions");
  }
}

NoiseVector compose_row(const GuidanceDeltasd& deltas, const GuidanceConfig& guidance,
                        double w2) {
  if (guidance.composition == CompositionRule::Bayes) {
    return guidance.mode == ManipulationMode::Addition ? compose_bayes_addition(deltas)
                                                       : compose_bayes_removal(deltas);
  }
  return assemble_guidance(deltas, guidance.mode, guidance.w1, w2, guidance.cfg_scale);
}

}  // namespace

NoiseVector guided_epsilon(const NoiseVector& x, int t, ConditionId src, ConditionId tgt,
                           const ConditionedDenoiser& denoiser,
                           const GuidanceConfig& guidance) {
  require_conditions(src, tgt);
  const NoiseVector e_uncond = denoiser.predict(x, t, UNCONDITIONAL);
  const NoiseVector e_src = denoiser.predict(x, t, src);
  const NoiseVector e_tgt = denoiser.predict(x, t, tgt);
  if (!e_uncond.allFinite() || !e_src.allFinite() || !e_tgt.allFinite()) {
    throw DenoiserFailure("denoiser returned non-finite values at t=" + std::to_string(t));
  }
  const GuidanceDeltasd deltas{e_uncond, e_src - e_uncond, e_tgt - e_uncond};
  const double w2 = evaluate(guidance.w2, t);
  return compose_row(deltas, guidance, w2);
}

Eigen::MatrixXd guided_epsilon_batch(const Eigen::MatrixXd& x_rows, int t, ConditionId src,
                                     ConditionId tgt, const ConditionedDenoiser& denoiser,
                                     const GuidanceConfig& guidance) {
  require_conditions(src, tgt);
  const Eigen::MatrixXd e_uncond = denoiser.predict_batch(x_rows, t, UNCONDITIONAL);
  const Eigen::MatrixXd e_src = denoiser.predict_batch(x_rows, t, src);
  const Eigen::MatrixXd e_tgt = denoiser.predict_batch(x_rows, t, tgt);
  if (!e_uncond.allFinite() || !e_src.allFinite() || !e_tgt.allFinite()) {
    throw DenoiserFailure("denoiser returned non-finite values at t=" + std::to_string(t));
  }
  const double w2 = evaluate(guidance.w2, t);
  Eigen::MatrixXd out(x_rows.rows(), x_rows.cols());
  GuidanceDeltasd deltas;
  for (Eigen::Index r = 0; r < x_rows.rows(); ++r) {
    deltas.unconditional = e_uncond.row(r).transpose();
    deltas.delta_src = e_src.row(r).transpose() - deltas.unconditional;
    deltas.delta_tgt = e_tgt.row(r).transpose() - deltas.unconditional;
    out.row(r) = compose_row(deltas, guidance, w2).transpose();
  }
  return out;
}

}  // namespace gtf
