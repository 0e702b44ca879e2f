#pragma once

namespace tenray {

inline constexpr const char* kToolName = "tenray";
inline constexpr const char* kToolVersion = "1.0.0";

}  // namespace tenray
