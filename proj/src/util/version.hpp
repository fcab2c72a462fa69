#pragma once

namespace tcdiv {

// Single source of truth for the library/experiment artifact version.
inline constexpr char kVersion[] = "0.1.0";

}  // namespace tcdiv
