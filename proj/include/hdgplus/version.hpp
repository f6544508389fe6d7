#pragma once

namespace hdgplus {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace hdgplus
