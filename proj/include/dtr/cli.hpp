#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dtr {

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumerical = 4;

// Runs `dtrkit <subcommand> ...`; args excludes the program name. Results go
// to `out` unless an output path is given; messages go to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dtr
