#pragma once

#include <iosfwd>
#include <string>
#include <vector>

// Batch command-line surface: train, fuse, reconstruct, eval, ablate.
namespace nestfuse::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;      // bad arguments, unreadable inputs, mismatched sizes
inline constexpr int kExitNumerical = 3;  // non-finite loss or SVD failure

/// Runs one command. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace nestfuse::cli
