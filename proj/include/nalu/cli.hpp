#pragma once

#include <iosfwd>
#include <string>
#include <vector>

// Command-line front end. Exit codes: 0 success, 2 usage or configuration
// error, 3 data or IO error, 4 numerical divergence.
namespace nalu::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

// args excludes the program name: {"bench-add", "--seed", "7", ...}.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, char** argv);

}  // namespace nalu::cli
