#pragma once

#include <iostream>
#include <string>
#include <vector>

namespace sed {

// Exit codes: 0 success, 1 runtime error, 2 usage or configuration error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Runs one `sedpipe` command. `args` excludes the program name. Reports go
/// to `out`, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr);

}  // namespace sed
