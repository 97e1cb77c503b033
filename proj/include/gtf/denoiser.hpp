#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cstdint>

#include "gtf/types.hpp"

namespace gtf {

// Conditional noise-prediction interface. Implementations must be
// deterministic in (x, t, c) and safe for concurrent read-only use.
class ConditionedDenoiser {
 public:
  virtual ~ConditionedDenoiser() = default;

  virtual int dimension() const = 0;

  virtual NoiseVector predict(const NoiseVector& x, int t, ConditionId c) const = 0;

  // Row-wise batch of predict; overridden where a vectorized form exists.
  virtual Eigen::MatrixXd predict_batch(const Eigen::MatrixXd& x_rows, int t,
                                        ConditionId c) const {
    Eigen::MatrixXd out(x_rows.rows(), x_rows.cols());
    for (Eigen::Index r = 0; r < x_rows.rows(); ++r) {
      out.row(r) = predict(x_rows.row(r).transpose(), t, c).transpose();
    }
    return out;
  }
};

// Pass-through wrapper that counts denoiser queries; a batched query counts
// once per row.
class CountingDenoiser final : public ConditionedDenoiser {
 public:
  explicit CountingDenoiser(const ConditionedDenoiser& inner) : inner_(inner) {}

  int dimension() const override { return inner_.dimension(); }

  NoiseVector predict(const NoiseVector& x, int t, ConditionId c) const override {
    queries_.fetch_add(1, std::memory_order_relaxed);
    return inner_.predict(x, t, c);
  }

  Eigen::MatrixXd predict_batch(const Eigen::MatrixXd& x_rows, int t,
                                ConditionId c) const override {
    queries_.fetch_add(static_cast<std::uint64_t>(x_rows.rows()), std::memory_order_relaxed);
    return inner_.predict_batch(x_rows, t, c);
  }

  std::uint64_t queries() const { return queries_.load(std::memory_order_relaxed); }
  void reset() { queries_.store(0, std::memory_order_relaxed); }

 private:
  const ConditionedDenoiser& inner_;
  mutable std::atomic<std::uint64_t> queries_{0};
};

}  // namespace gtf
