#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace fairmargin::cli {

/// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kCheckFailed = 1,
  kConfigError = 2,
  kIoError = 3,
  kDataError = 4,
  kEvalPrecondition = 5,
};

/// Entry point behind the `fairmargin` binary. args[0] is the program name.
/// Commands: gen-data, train, eval, grad-check, export-embeddings.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fairmargin::cli
