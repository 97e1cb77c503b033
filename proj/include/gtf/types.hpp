#pragma once

#include <Eigen/Dense>
#include <compare>
#include <cstdint>
#include <functional>

namespace gtf {

using NoiseVector = Eigen::VectorXd;

// Opaque condition token; value -1 is the distinguished unconditional slot.
struct ConditionId {
  std::int32_t value = -1;

  friend auto operator<=>(const ConditionId&, const ConditionId&) = default;
};

inline constexpr ConditionId UNCONDITIONAL{-1};

}  // namespace gtf

template <>
struct std::hash<gtf::ConditionId> {
  std::size_t operator()(const gtf::ConditionId& c) const noexcept {
    return std::hash<std::int32_t>{}(c.value);
  }
};
