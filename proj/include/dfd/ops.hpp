#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "dfd/tensor.hpp"

// Differentiable tensor operations. Each op records itself on the active tape
// when any operand requires grad.
namespace dfd {
inline namespace DFD_PRECISION_NS {

// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);

// Batched product over the leading axis: [B,m,k] x [B,k,n] -> [B,m,n], or with
// transpose_b, [B,m,k] x [B,n,k]^T -> [B,m,n].
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false);

enum class ElementwiseOp { kAdd, kSub, kMul };

// Shapes must match, or b must be rank-1 matching a's last extent (bias
// broadcast). No other broadcasting is supported.
Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b);
inline Tensor add(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::kAdd, a, b); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::kSub, a, b); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::kMul, a, b); }

Tensor scale(const Tensor& a, Real factor);

enum class ReduceOp { kSum, kMean };

// Reduces along `axis` (removing it), or over every element when axis is empty.
Tensor reduce(ReduceOp op, const Tensor& a, std::optional<std::size_t> axis = std::nullopt);
inline Tensor sum(const Tensor& a) { return reduce(ReduceOp::kSum, a); }
inline Tensor sum(const Tensor& a, std::size_t axis) { return reduce(ReduceOp::kSum, a, axis); }
inline Tensor mean(const Tensor& a) { return reduce(ReduceOp::kMean, a); }
inline Tensor mean(const Tensor& a, std::size_t axis) { return reduce(ReduceOp::kMean, a, axis); }

Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, std::span<const std::size_t> order);
inline Tensor permute(const Tensor& a, std::initializer_list<std::size_t> order) {
  return permute(a, std::span<const std::size_t>(order.begin(), order.size()));
}
Tensor concat(std::span<const Tensor> parts, std::size_t axis);

Tensor relu(const Tensor& x);

// Max-shifted softmax along `axis`.
Tensor softmax(const Tensor& x, std::size_t axis);

}  // namespace DFD_PRECISION_NS
}  // namespace dfd
