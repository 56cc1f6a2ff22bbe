#pragma once

// Command-line entry point. Every subcommand reads an optional JSON config
// (--config) whose fields mirror the long flags (underscores for dashes);
// flags given on the command line win over the file.
//
// CSV artifacts go to --out when given, with the one-line summary on stdout.
// Without --out the CSV goes to stdout and the summary to stderr.
//
// Exit codes: 0 success, 1 task failure, 2 configuration or input error.

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace dlk::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitTaskFailure = 1;
inline constexpr int kExitConfigError = 2;

/// Invalid configuration; the message names the offending field.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Task failure after a valid configuration (e.g. a failed gradient check).
class TaskFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Subcommand names in help order.
const std::vector<std::string>& subcommands();

/// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace dlk::cli
