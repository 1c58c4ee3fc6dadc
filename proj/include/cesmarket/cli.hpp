#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace cesmarket::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailed = 1;
inline constexpr int kExitInput = 2;

/// Runs one ces-market invocation. JSON reports go to `out` (or --out),
/// diagnostics and demo text to `err`. Returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Same with argv[0] supplied.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cesmarket::cli
