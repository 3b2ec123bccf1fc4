#pragma once

namespace crdp {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace crdp
