#pragma once

#include <iosfwd>

namespace sacrf {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitCompute = 1;  // divergence, non-finite values, failed check
inline constexpr int kExitInput = 2;    // bad flags, files, shapes or values

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sacrf
