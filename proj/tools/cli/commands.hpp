#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace exnet::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Runs the tool with `args` (args[0] is the program name). Returns the
/// process exit code: 0 on success, 1 on a runtime failure or a failed
/// gradient check, 2 on a usage or configuration error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Flat `key = value` lines; `#` starts a comment, `[section]` headers are
/// ignored and surrounding quotes are stripped. Throws ConfigError.
std::vector<std::pair<std::string, std::string>> parse_config_file(const std::string& text);

}  // namespace exnet::cli
