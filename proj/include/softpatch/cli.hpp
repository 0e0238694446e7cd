#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace softpatch {

/// Entry point of the `softpatch` tool. args excludes the program name.
/// Exit codes: 0 success, 2 input error, 3 format error, 4 infeasible request, 1 other failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace softpatch
