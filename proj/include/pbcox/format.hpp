#pragma once

// Shared numeric formatting for reports: 9 significant digits everywhere.

#include <cstdlib>
#include <fmt/format.h>
#include <string>

namespace pbcox {

inline std::string fmt9(double v) { return fmt::format("{:.9g}", v); }

// v rounded to 9 significant digits, so JSON serialization prints at most 9.
inline double round9(double v) { return std::strtod(fmt9(v).c_str(), nullptr); }

}  // namespace pbcox
