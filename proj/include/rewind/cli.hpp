#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "rewind/error.hpp"

namespace rwd {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitPrecondition = 3;
inline constexpr int kExitInternal = 4;

int exit_code_for(ErrorCode code);

// args excludes the program name. Prompts for interactive recovery are read
// from `in` and written to `err`.
int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace rwd
