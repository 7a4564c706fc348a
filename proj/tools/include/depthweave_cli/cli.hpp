#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace depthweave::cli {

enum ExitCode : int { kSuccess = 0, kInputError = 1, kPartialFailure = 2 };

/// Runs one invocation of the tool. args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace depthweave::cli
