#pragma once

namespace drqkd {

inline constexpr const char* version = "0.1.0";

}  // namespace drqkd
