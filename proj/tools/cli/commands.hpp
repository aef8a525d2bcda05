#pragma once

#include <exception>
#include <ostream>

namespace urw::cli {

// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfigFailure = 2,
  kDataFailure = 3,
  kNumericFailure = 4,
};

// Maps a library exception to its exit code.
int exit_code_for(const std::exception& e);

// Entry point of the urw tool: gen-data, train, eval, rewrite, attn-dump.
// Results go to `out`, diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace urw::cli
