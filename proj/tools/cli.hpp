#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rotor::cli {

// Exit codes
inline constexpr int kOk = 0;
inline constexpr int kConfigError = 2;   // bad flags, config or input file
inline constexpr int kRuntimeError = 3;  // simulation or analysis failed

/// Runs rotorctl with `args` (program name excluded).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rotor::cli
