#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace metricforge::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Runs metricforge-eval with `args` (argv without the program name).
/// Scores go to `out` (or -o), everything else to `err`.
int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace metricforge::cli
