#ifndef QUATREC_CLI_HPP_
#define QUATREC_CLI_HPP_

#include <iosfwd>
#include <string>
#include <vector>

namespace quatrec::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

/// Environment variable naming the default root for run outputs.
inline constexpr const char* kOutputRootEnv = "QUATREC_OUTPUT_ROOT";

/// Runs the `quatrec` command line; args exclude the program name.
/// Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace quatrec::cli

#endif  // QUATREC_CLI_HPP_
