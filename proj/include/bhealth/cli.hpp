#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace bhealth {

/// Exit statuses of the command line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitValidation = 2;

/// Runs one subcommand. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace bhealth
