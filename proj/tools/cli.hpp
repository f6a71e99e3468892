#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace a2j {

// Runs one subcommand. Returns the process exit code; usage and errors go to
// `err`, results to `out`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace a2j
