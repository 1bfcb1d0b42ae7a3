#pragma once

#include <ostream>

namespace dfd::tools {

// Runs the 64-bit gradient suite, printing one line per check. Returns true
// when every check is within tolerance.
bool run_gradcheck(std::ostream& out, bool include_models);

}  // namespace dfd::tools
