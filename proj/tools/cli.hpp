#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace wmdrive::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitNumerical = 4;
inline constexpr int kExitOther = 1;

/// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace wmdrive::cli
