#pragma once

namespace polishfb {

inline constexpr const char* kVersion = "0.1.0";

} // namespace polishfb
