#pragma once

namespace gcr {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace gcr
