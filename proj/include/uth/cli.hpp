#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace uth::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;

// Runs the `uth` command line. args excludes the program name. Results go
// to out, diagnostics to err.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace uth::cli
