#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace genvp {

// Exit codes of the command-line entry point.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;     // bad config, arguments or contract
inline constexpr int kExitIo = 3;         // filesystem or dataset integrity
inline constexpr int kExitNonFinite = 4;  // training produced a non-finite loss

// Runs `genvp <subcommand> ...`; args exclude the program name. Errors are
// reported on stderr and mapped onto the exit codes above.
int run_cli(const std::vector<std::string>& args,
            const std::filesystem::path& default_config);

}  // namespace genvp
