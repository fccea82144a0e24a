#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace otground::cli {

enum ExitCode : int {
    kSuccess = 0,
    kFailure = 1,
    kUsage = 2,
    kFormat = 3,
    kNumeric = 4,
};

// Runs one CLI invocation. args[0] is the program name.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace otground::cli
