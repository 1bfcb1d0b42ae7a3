#include "dfd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dfd {
inline namespace DFD_PRECISION_NS {

namespace {
thread_local Tape* g_active_tape = nullptr;
}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor() : impl_(std::make_shared<Storage>()) { impl_->data.assign(1, Real(0)); }

Tensor Tensor::filled(Shape shape, Real value) {
  Tensor t;
  t.impl_->data.assign(numel(shape), value);
  t.impl_->shape = std::move(shape);
  return t;
}

Tensor Tensor::from_values(Shape shape, std::vector<Real> values) {
  if (values.size() != numel(shape)) {
    throw ShapeError("got " + std::to_string(values.size()) + " values for shape " +
                     shape_str(shape));
  }
  Tensor t;
  t.impl_->shape = std::move(shape);
  t.impl_->data = std::move(values);
  return t;
}

const Shape& Tensor::shape() const { return impl_->shape; }
std::size_t Tensor::size() const { return impl_->data.size(); }

std::size_t Tensor::extent(std::size_t axis) const {
  if (axis >= rank()) {
    throw AxisError("axis " + std::to_string(axis) + " for shape " + shape_str(shape()));
  }
  return impl_->shape[axis];
}

std::span<const Real> Tensor::data() const { return impl_->data; }
std::span<Real> Tensor::mutable_data() const { return impl_->data; }

Real Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }
void Tensor::set_requires_grad(bool on) { impl_->requires_grad = on; }

std::span<const Real> Tensor::grad() const {
  if (impl_->grad.size() != impl_->data.size()) impl_->grad.assign(impl_->data.size(), Real(0));
  return impl_->grad;
}

std::span<Real> Tensor::mutable_grad() const {
  if (impl_->grad.size() != impl_->data.size()) impl_->grad.assign(impl_->data.size(), Real(0));
  return impl_->grad;
}

bool Tensor::has_grad() const { return impl_->grad.size() == impl_->data.size(); }

void Tensor::zero_grad() const { std::fill(impl_->grad.begin(), impl_->grad.end(), Real(0)); }

Tensor Tensor::clone() const { return from_values(shape(), impl_->data); }

void Tape::record(Tensor output, Rule rule) {
  records_.push_back(Record{std::move(output), std::move(rule)});
}

void Tape::backward(const Tensor& loss) {
  if (loss.rank() != 0) {
    throw ContractError("backward() needs a rank-0 loss, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw ContractError("backward() on a loss that was not produced through the tape");
  }
  Tensor seed = loss;
  seed.mutable_grad()[0] += Real(1);
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    if (!it->output.has_grad()) continue;  // nothing flowed into this node
    it->rule(it->output);
  }
  records_.clear();
}

void backward(const Tensor& loss, Tape& tape) { tape.backward(loss); }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

Tape* active_tape() { return g_active_tape; }

Tensor make_result(Shape shape, std::vector<Real> data, std::span<const Tensor> inputs,
                   Tape::Rule rule) {
  Tensor out = Tensor::from_values(std::move(shape), std::move(data));
  Tape* tape = g_active_tape;
  if (tape == nullptr) return out;
  bool any = std::any_of(inputs.begin(), inputs.end(),
                         [](const Tensor& t) { return t.requires_grad(); });
  if (!any) return out;
  out.set_requires_grad(true);
  tape->record(out, std::move(rule));
  return out;
}

Tensor make_result(Shape shape, std::vector<Real> data,
                   std::initializer_list<const Tensor*> inputs, Tape::Rule rule) {
  Tensor out = Tensor::from_values(std::move(shape), std::move(data));
  Tape* tape = g_active_tape;
  if (tape == nullptr) return out;
  bool any = std::any_of(inputs.begin(), inputs.end(),
                         [](const Tensor* t) { return t->requires_grad(); });
  if (!any) return out;
  out.set_requires_grad(true);
  tape->record(out, std::move(rule));
  return out;
}

double grad_check(const std::function<Tensor()>& fn, std::span<const Tensor> inputs,
                  double step) {
  std::vector<Tensor> xs(inputs.begin(), inputs.end());
  std::vector<bool> previous_flags;
  for (auto& x : xs) {
    previous_flags.push_back(x.requires_grad());
    x.set_requires_grad(true);
    x.mutable_grad();
    x.zero_grad();
  }
  // Restores the callers' flags on every exit path, including a non-scalar fn.
  struct Restore {
    std::vector<Tensor>& xs;
    const std::vector<bool>& flags;
    ~Restore() {
      for (std::size_t i = 0; i < xs.size(); ++i) {
        xs[i].zero_grad();
        xs[i].set_requires_grad(flags[i]);
      }
    }
  } restore{xs, previous_flags};

  Tape tape;
  {
    TapeScope scope(tape);
    Tensor loss = fn();
    if (loss.rank() != 0) {
      throw ContractError("grad_check needs a scalar function, got shape " +
                          shape_str(loss.shape()));
    }
    tape.backward(loss);
  }

  auto evaluate = [&]() -> double {
    NoGradScope no_grad;
    return static_cast<double>(fn().item());
  };

  double worst = 0.0;
  for (auto& x : xs) {
    std::vector<Real> analytic(x.grad().begin(), x.grad().end());
    auto values = x.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const Real saved = values[i];
      values[i] = static_cast<Real>(saved + step);
      const double plus = evaluate();
      values[i] = static_cast<Real>(saved - step);
      const double minus = evaluate();
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * step);
      const double a = static_cast<double>(analytic[i]);
      worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
    }
  }
  return worst;
}

double grad_check(const std::function<Tensor(const Tensor&)>& fn, const Tensor& x,
                  double step) {
  Tensor input = x;
  return grad_check([&]() { return fn(input); }, std::span<const Tensor>(&input, 1), step);
}

}  // namespace DFD_PRECISION_NS
}  // namespace dfd
