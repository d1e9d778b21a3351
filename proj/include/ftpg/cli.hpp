#pragma once

#include <exception>
#include <iosfwd>

namespace ftpg {

/// Exit status for an exception escaping a subcommand: 2 for I/O, format
/// and data errors, 1 for everything else.
int exit_code_for(const std::exception& e);

/// Parses argv (argv[0] is the program name) and runs one subcommand:
/// make-world, train, eval, report, gradcheck or selftest.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ftpg
