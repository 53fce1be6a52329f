#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace arr::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Entry point for the `arr` binary. args[0] is the program name.
///
/// Subcommands: build-bank, retrieve, pipeline, eval, ablate.
/// Exit status: 0 on full success, 1 on runtime errors or any failed record,
/// 2 on usage errors (bad flags, missing input files).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace arr::cli
