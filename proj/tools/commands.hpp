#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace nback::cli {

enum ExitCode : int { kExitClean = 0, kExitError = 1, kExitPartial = 2 };

struct Streams {
  std::istream& in;
  std::ostream& out;
  std::ostream& err;
};

/// Parses argv (argv[0] is the program name) and dispatches to a subcommand.
int run_cli(const std::vector<std::string>& args, Streams io);

}  // namespace nback::cli
