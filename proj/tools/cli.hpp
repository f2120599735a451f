#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace gidea::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitProvider = 3;

// Runs one command line (args exclude the program name). Results go to
// `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Registry used when neither --models nor GIDEA_MODELS is given.
const char* builtin_models_json();

}  // namespace gidea::cli
