#pragma once

namespace methanol {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace methanol
