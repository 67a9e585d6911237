#pragma once

// Named finite-difference checks, shared by the CLI and the acceptance run.
// Every target builds small random inputs from its seed and checks all of its
// parameters in 64-bit mode.

#include <cstdint>
#include <string>
#include <vector>

#include "vlscene/gradcheck.hpp"

namespace vlscene::gradcheck_targets {

const std::vector<std::string>& names();
/// Throws ConfigError listing the valid names when `target` is unknown.
GradcheckReport run(const std::string& target, std::uint64_t seed);

}  // namespace vlscene::gradcheck_targets
