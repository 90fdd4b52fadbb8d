#pragma once

#include <string_view>

namespace wfio {

inline constexpr std::string_view kToolName = "wfio";
inline constexpr std::string_view kToolVersion = "0.1.0";

}  // namespace wfio
