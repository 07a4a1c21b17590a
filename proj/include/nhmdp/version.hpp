#pragma once

namespace nhmdp {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace nhmdp
