#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace abase {

/// Runs one CLI invocation. `args` includes the program name. Returns the
/// process exit code: 0 ok, 1 validation or usage, 2 analysis failed,
/// 3 permission, 4 not found, 5 state or conflict.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace abase
