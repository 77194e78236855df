#pragma once

// Command-line front end: gen, train, eval, rank, gradcheck, kernel, prior.
//
// Exit codes: 0 success, 1 invalid input or usage, 2 gradient check above
// tolerance.

#include <iosfwd>
#include <string>
#include <vector>

namespace calibseg::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitCheckFailed = 2;

// `args` excludes the program name.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, char** argv);

}  // namespace calibseg::cli
