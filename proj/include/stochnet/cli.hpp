#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace stochnet::cli {

// Runs one subcommand. `args` excludes the program name. Failures print a
// single `error: <kind>: <message>` line to `err` and return 1.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace stochnet::cli
