// Compiled against the 64-bit build of the library.
#include <cstdio>

#include "dfd/verification.hpp"
#include "gradcheck.hpp"

namespace dfd::tools {

bool run_gradcheck(std::ostream& out, bool include_models) {
  static_assert(sizeof(Real) == 8, "gradient checks require the 64-bit build");
  bool ok = true;
  GradSuiteOptions options;
  options.include_models = include_models;
  run_gradient_suite(options, [&](const GradCheckResult& r) {
    char line[160];
    std::snprintf(line, sizeof(line), "%-4s %-28s error=%.3e tol=%.0e\n",
                  r.passed() ? "ok" : "FAIL", r.name.c_str(), r.error, r.tolerance);
    out << line << std::flush;
    ok = ok && r.passed();
  });
  return ok;
}

}  // namespace dfd::tools
