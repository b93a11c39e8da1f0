#pragma once

namespace gmr {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace gmr
