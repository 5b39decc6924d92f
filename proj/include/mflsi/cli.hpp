#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mflsi {

/// Runs one CLI invocation. Exit codes: 0 success, 2 precondition or usage
/// errors, 3 numerical failures, 4 I/O errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Version string recorded in sidecars.
std::string version();

}  // namespace mflsi
