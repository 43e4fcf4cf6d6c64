#pragma once

namespace phicaloric {

// Bumped on any change that invalidates cached solver snapshots.
inline constexpr const char* kVersion = "0.1.0";

}  // namespace phicaloric
