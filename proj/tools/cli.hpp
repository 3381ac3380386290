#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace fpsr::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;

/// Runs the command line `args` (program name excluded). Diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& err);

}  // namespace fpsr::cli
