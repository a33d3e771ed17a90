#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ipwsel::cli {

// Runs the command line `args` (args[0] is the program name). Results go to
// --out or `out`; failures print one "error: kind=... message=..." line to
// `err`. Returns 0 on success, 2 on validation errors, 3 on convergence
// failures.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ipwsel::cli
