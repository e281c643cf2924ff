#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace lodmsq::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Runs the command line tool; args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Parses flat key=value text. Blank lines and lines starting with '#' are skipped.
std::vector<std::pair<std::string, std::string>> parse_flat_config(const std::string& text);

}  // namespace lodmsq::cli
