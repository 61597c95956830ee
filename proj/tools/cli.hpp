#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace edgemoe::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitInfeasible = 3;

// Runs one command line (args exclude the program name). Machine-readable
// output goes to `out`, diagnostics to `err`. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace edgemoe::cli
