#pragma once

// Command-line front end: train, compare and targets subcommands.
//
// Exit codes: 0 success, 1 runtime failure, 2 configuration error,
// 3 data error. Every failure prints one line to the error stream.

#include <iosfwd>
#include <string>
#include <vector>

#include "bake/bake.hpp"
#include "bake/trainer.hpp"

namespace bake::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;

/// "cosine", "cosine:<warmup>", "step" or "step:<m1>,<m2>,...".
Schedule parse_schedule(const std::string& text);
std::string to_string(const Schedule& schedule);

/// Comma-separated list; empty entries are dropped.
std::vector<std::string> split_list(const std::string& text);

/// Top-k (class, probability) pairs of one distribution, highest first,
/// ties toward the lower class index.
std::vector<std::pair<std::size_t, double>> top_k(std::span<const double> probs, std::size_t k);

/// Runs the tool. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace bake::cli
