#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace rbc {

/// Command-line entry point. Returns 0 on success, 1 on validation errors
/// (bad flags, config, dimensions, protocol preconditions) and 2 on runtime
/// failures (I/O, numerics).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rbc
