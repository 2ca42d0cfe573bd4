#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sfsir {

inline constexpr const char* kVersion = "0.1.0";

//! Exit codes of the command-line tool.
enum ExitCode : int
{
  kExitOk = 0,
  kExitUsage = 1,
  kExitInput = 2,
  kExitComputation = 3
};

//! Runs the tool with args (without the program name), writing human-readable
//! output to out and diagnostics to err. Returns the exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace sfsir
