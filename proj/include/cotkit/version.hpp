#pragma once

#include <string_view>

namespace cotkit {

inline constexpr std::string_view kToolName = "cotkit";
inline constexpr std::string_view kToolVersion = "0.1.0";
inline constexpr int kSchemaVersion = 1;

}  // namespace cotkit
