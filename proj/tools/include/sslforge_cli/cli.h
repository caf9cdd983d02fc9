#ifndef SSLFORGE_CLI_CLI_H_
#define SSLFORGE_CLI_CLI_H_

#include <ostream>
#include <string>
#include <vector>

namespace sslforge::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;

// Runs one invocation; args excludes the program name. Results go to `out`,
// diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sslforge::cli

#endif  // SSLFORGE_CLI_CLI_H_
