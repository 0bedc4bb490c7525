#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace julesz::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Runs the julesz command line. `args` excludes the program name. Normal
/// output goes to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace julesz::cli
