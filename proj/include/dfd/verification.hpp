#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "dfd/config.hpp"
#include "dfd/tensor.hpp"

namespace dfd {
inline namespace DFD_PRECISION_NS {

struct GradCheckResult {
  std::string name;
  double error = 0;  // max |analytic - numeric| / max(1, |analytic|)
  double tolerance = 0;
  bool passed() const { return error < tolerance; }
};

struct GradSuiteOptions {
  double layer_tolerance = 1e-5;
  double model_tolerance = 1e-4;
  // Small enough that perturbations rarely straddle a ReLU kink, large enough
  // that 64-bit round-off stays near 1e-9.
  double step = 1e-6;
  std::uint64_t seed = 11;
  bool include_models = true;
};

// Smallest configurations used by the end-to-end model checks.
ModelConfig micro_config(Arch arch);

// Finite-difference checks of every differentiable op and layer, then of the
// three full models under micro_config. Meaningful in the 64-bit build only.
std::vector<GradCheckResult> run_gradient_suite(
    const GradSuiteOptions& options = {},
    const std::function<void(const GradCheckResult&)>& on_result = {});

}  // namespace DFD_PRECISION_NS
}  // namespace dfd
