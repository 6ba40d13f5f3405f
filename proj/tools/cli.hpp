#pragma once

namespace windcnn::tools {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

/// Parses arguments, runs one subcommand and maps failures to exit codes:
/// 2 for usage and configuration errors, 3 for data errors, 4 for numeric
/// failures.
int run_cli(int argc, char** argv);

}  // namespace windcnn::tools
