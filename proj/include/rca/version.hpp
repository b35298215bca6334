#pragma once

namespace rca {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace rca
