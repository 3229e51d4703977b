#pragma once

namespace nosaf {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace nosaf
