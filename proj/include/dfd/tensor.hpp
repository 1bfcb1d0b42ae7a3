#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dfd/core.hpp"

namespace dfd {
inline namespace DFD_PRECISION_NS {

using Shape = std::vector<std::size_t>;

// Product of extents; 1 for rank-0.
std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major array with optional gradient participation.
//
// A Tensor is a shared handle: copies alias the same storage. Values are
// treated as immutable once an op has produced them; only parameters are
// mutated in place (by optimizers and the finite-difference checker).
// Constness applies to the handle; the mutable_* accessors reach shared storage.
class Tensor {
 public:
  Tensor();

  static Tensor filled(Shape shape, Real value);
  static Tensor zeros(Shape shape) { return filled(std::move(shape), Real(0)); }
  // Throws ShapeError unless values.size() == numel(shape).
  static Tensor from_values(Shape shape, std::vector<Real> values);
  static Tensor scalar(Real value) { return filled({}, value); }

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  std::size_t extent(std::size_t axis) const;

  std::span<const Real> data() const;
  std::span<Real> mutable_data() const;
  Real item() const;  // rank-0 or single-element tensors only

  bool requires_grad() const;
  void set_requires_grad(bool on);

  // Gradient buffer; allocated (zero-filled) on first access.
  std::span<const Real> grad() const;
  std::span<Real> mutable_grad() const;
  bool has_grad() const;
  void zero_grad() const;

  Tensor clone() const;  // deep copy, detached
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Storage {
    Shape shape;
    std::vector<Real> data;
    std::vector<Real> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Storage> impl_;
};

// Ordered log of differentiable ops executed while a TapeScope is active.
class Tape {
 public:
  using Rule = std::function<void(const Tensor& out)>;

  void record(Tensor output, Rule rule);
  std::size_t size() const { return records_.size(); }
  void clear() { records_.clear(); }

  // Seeds d(loss)/d(loss) = 1 and replays records in reverse order. Gradients
  // accumulate into every participating tensor. The tape is cleared afterwards.
  void backward(const Tensor& loss);

 private:
  struct Record {
    Tensor output;
    Rule rule;
  };
  std::vector<Record> records_;
};

void backward(const Tensor& loss, Tape& tape);

// Activates a tape for the current thread. Ops executed outside any scope are
// not recorded and produce tensors that do not require grad.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

// Disables recording for the current thread within its lifetime.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

// Builds an op result. When a tape is active and any input requires grad, the
// result requires grad and `rule` is recorded to propagate out.grad() into the
// inputs.
Tensor make_result(Shape shape, std::vector<Real> data,
                   std::initializer_list<const Tensor*> inputs, Tape::Rule rule);
Tensor make_result(Shape shape, std::vector<Real> data,
                   std::span<const Tensor> inputs, Tape::Rule rule);

// Central finite-difference check of a scalar function.
// Returns max_i |analytic_i - numeric_i| / max(1, |analytic_i|).
double grad_check(const std::function<Tensor(const Tensor&)>& fn, const Tensor& x,
                  double step);

// Same measure over every coordinate of several tensors that `fn` closes over
// (typically a model's parameters). The tensors are perturbed in place and
// restored.
double grad_check(const std::function<Tensor()>& fn, std::span<const Tensor> inputs,
                  double step);

}  // namespace DFD_PRECISION_NS
}  // namespace dfd
