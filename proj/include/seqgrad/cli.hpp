#pragma once

#include <iosfwd>
#include <span>
#include <string>

namespace seqgrad {

inline constexpr const char* kVersion = "0.1.0";

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Entry point of the `seqgrad` executable. args excludes the program name.
/// Subcommands: gen-data, train, eval, compare, variance.
int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace seqgrad
