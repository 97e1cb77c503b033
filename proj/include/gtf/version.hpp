#pragma once

namespace gtf {

inline constexpr const char* kVersion = "1.0.0";
inline constexpr const char* kCheckpointTag = "gtf-mlp-v1";

}  // namespace gtf
