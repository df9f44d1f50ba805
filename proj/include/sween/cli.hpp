#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sween::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kIoFailure = 3,
  kNumericFailure = 4,
};

// Runs one command line (args excludes the program name). Errors print a
// single `error: ...` line to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sween::cli
