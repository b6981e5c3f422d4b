#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "creep/error.hpp"

namespace creep::cli {

enum ExitCode : int {
  kSuccess = 0,
  kConfigError = 2,
  kIoError = 3,
  kNumericalError = 4,
};

ExitCode exit_code_for(ErrorKind kind) noexcept;

/// Runs one command line. `args` excludes the program name. Normal output
/// goes to `out`, warnings and errors to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace creep::cli
