#pragma once

namespace hdte {
inline constexpr const char* kVersion = "0.1.0";
}
