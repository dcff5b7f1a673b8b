#pragma once

namespace firn::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitRuntime = 2;

/// Parses argv, runs one subcommand and maps failures to exit codes.
int dispatch(int argc, char** argv);

}  // namespace firn::cli
