#pragma once

#include <cstddef>
#include <optional>

#include "dfd/tensor.hpp"

// Fused neural-network kernels with hand-written backward rules.
namespace dfd {
inline namespace DFD_PRECISION_NS {

// x: [..., in], weight: [out, in], bias: [out] or empty -> [..., out].
Tensor linear(const Tensor& x, const Tensor& weight, const std::optional<Tensor>& bias);

struct Conv2dGeometry {
  std::size_t stride = 1;
  std::size_t padding = 0;  // zero padding on every side
  std::size_t groups = 1;
  // When set, a trailing partial window is dropped (floor division) instead of
  // raising ShapeError.
  bool floor_extent = false;
};

// Grouped cross-correlation. x: [N,C,H,W], weight: [O, C/groups, kh, kw],
// bias: [O] or empty. Output extent (H + 2p - kh) / stride + 1 must be integral.
Tensor conv2d(const Tensor& x, const Tensor& weight, const std::optional<Tensor>& bias,
              const Conv2dGeometry& geometry);

// Normalizes over the last axis: (x - mean) / sqrt(var + eps) * gamma + beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Real eps);

struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
  Real momentum = Real(0.1);
  Real eps = Real(1e-5);
};

// x: [N,C] or [N,C,H,W]; statistics per channel over batch and spatial axes.
// In training mode the batch statistics are used and the running statistics
// are updated (unbiased variance); otherwise the running statistics are used.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state, bool training);

// Mean over exact (H/oh) x (W/ow) tiles. x: [N,C,H,W] -> [N,C,oh,ow].
Tensor avg_pool2d(const Tensor& x, std::size_t out_h, std::size_t out_w);

}  // namespace DFD_PRECISION_NS
}  // namespace dfd
