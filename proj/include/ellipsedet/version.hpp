#pragma once

namespace ellipsedet {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace ellipsedet
