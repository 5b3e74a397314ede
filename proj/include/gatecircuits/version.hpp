#pragma once

namespace gatecircuits {

inline constexpr const char* kEngineVersion = "gatecircuits 0.1.0";

}  // namespace gatecircuits
