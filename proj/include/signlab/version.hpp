#pragma once

#include <string_view>

namespace signlab {

inline constexpr std::string_view kVersion = "signlab-0.1.0";

}  // namespace signlab
