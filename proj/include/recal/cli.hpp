#pragma once

#include <string>
#include <vector>

namespace recal {

/// Runs one command (train, eval, audit, gradcheck, dump-activations,
/// generate-data) given the arguments after the program name. Returns the
/// process exit code: 0 success, 1 usage or config problem, 2 numerical
/// abort, 3 verification failure.
int run_cli(const std::vector<std::string>& args);

}  // namespace recal
