#pragma once

namespace pchsl {
inline constexpr const char* kVersion = "0.1.0";
}
