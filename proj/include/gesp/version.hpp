#pragma once

namespace gesp {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace gesp
