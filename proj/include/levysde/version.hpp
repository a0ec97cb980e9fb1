#pragma once

namespace levysde {

inline constexpr const char* kVersion = "levysde 0.1.0";

} // namespace levysde
