#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dfd/functional.hpp"
#include "dfd/rng.hpp"
#include "dfd/tensor.hpp"

namespace dfd {
inline namespace DFD_PRECISION_NS {

enum class Mode { kTrain, kEval };

// A named trainable tensor. Its gradient lives in value.grad().
struct Parameter {
  std::string name;
  Tensor value;
};

// Parameter/buffer registry with dotted names ("block0.attn.q_proj.weight").
// Modules are pinned in memory because parents keep pointers to children.
class Module {
 public:
  Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;
  virtual ~Module() = default;

  std::vector<Parameter> parameters() const;
  // Non-trainable state (batch-norm running statistics).
  std::vector<Parameter> buffers() const;
  void zero_grad();

 protected:
  Tensor register_parameter(std::string name, Tensor value);
  Tensor register_buffer(std::string name, Tensor value);
  // An empty name merges the child's entries into this module's namespace.
  void register_module(std::string name, Module& child);

 private:
  void collect(const std::string& prefix, bool want_buffers, std::vector<Parameter>& out) const;

  std::vector<Parameter> params_;
  std::vector<Parameter> buffers_;
  std::vector<std::pair<std::string, Module*>> children_;
};

// Sum over parameters of product(shape).
std::size_t count_parameters(const Module& module);

// uniform(-b, b) with b = sqrt(6 / fan_in).
Tensor init_uniform(Shape shape, std::size_t fan_in, Rng& rng);

class Linear : public Module {
 public:
  Linear(std::size_t in_features, std::size_t out_features, Rng& rng, bool has_bias = true);

  // x: [..., in_features]
  Tensor forward(const Tensor& x) const;

  std::size_t in_features() const { return in_; }
  std::size_t out_features() const { return out_; }
  Tensor weight() const { return weight_; }
  std::optional<Tensor> bias() const { return bias_; }

 private:
  std::size_t in_, out_;
  Tensor weight_;
  std::optional<Tensor> bias_;
};

struct Conv2dOptions {
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;
  bool has_bias = true;
  bool floor_extent = false;
};

class Conv2d : public Module {
 public:
  Conv2d(std::size_t in_channels, std::size_t out_channels, const Conv2dOptions& options, Rng& rng);

  Tensor forward(const Tensor& x) const;

  std::size_t in_channels() const { return in_; }
  std::size_t out_channels() const { return out_; }
  Tensor weight() const { return weight_; }
  std::optional<Tensor> bias() const { return bias_; }

 private:
  std::size_t in_, out_;
  Conv2dGeometry geometry_;
  Tensor weight_;
  std::optional<Tensor> bias_;
};

// Depthwise kxk conv (groups == channels, same padding) then pointwise 1x1.
class DepthwiseSeparable : public Module {
 public:
  DepthwiseSeparable(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, Rng& rng);

  Tensor forward(const Tensor& x) const;

  Conv2d& depthwise() { return depthwise_; }
  Conv2d& pointwise() { return pointwise_; }

 private:
  Conv2d depthwise_;
  Conv2d pointwise_;
};

class LayerNorm : public Module {
 public:
  explicit LayerNorm(std::size_t features, Real eps = Real(1e-5));
  Tensor forward(const Tensor& x) const;  // over the last axis

 private:
  Real eps_;
  Tensor gamma_, beta_;
};

class BatchNorm : public Module {
 public:
  explicit BatchNorm(std::size_t features, Real momentum = Real(0.1), Real eps = Real(1e-5));
  Tensor forward(const Tensor& x, Mode mode);

  Tensor gamma() const { return gamma_; }
  Tensor beta() const { return beta_; }

 private:
  Tensor gamma_, beta_;
  BatchNormState state_;
};

class MultiHeadAttention : public Module {
 public:
  MultiHeadAttention(std::size_t embed_dim, std::size_t num_heads, Rng& rng);

  // tokens: [N, T, embed_dim]
  Tensor forward(const Tensor& tokens) const;

  std::size_t embed_dim() const { return dim_; }
  std::size_t num_heads() const { return heads_; }
  Linear& q_proj() { return q_; }
  Linear& k_proj() { return k_; }
  Linear& v_proj() { return v_; }
  Linear& out_proj() { return o_; }

 private:
  std::size_t dim_, heads_;
  Linear q_, k_, v_, o_;
};

// fc2(relu(fc1(x)))
class FeedForward : public Module {
 public:
  FeedForward(std::size_t dim, std::size_t hidden, Rng& rng);
  Tensor forward(const Tensor& x) const;

  Linear& fc1() { return fc1_; }
  Linear& fc2() { return fc2_; }

 private:
  Linear fc1_, fc2_;
};

// Strided conv with kernel == stride == patch, flattened row-major into tokens.
class PatchEmbed : public Module {
 public:
  PatchEmbed(std::size_t in_channels, std::size_t embed_dim, std::size_t patch, Rng& rng);

  // x: [N, C, H, W] -> [N, (H/P)(W/P), D]
  Tensor forward(const Tensor& x) const;

 private:
  std::size_t patch_;
  Conv2d proj_;
};

// tokens [N,T,D] + table [T,D], broadcast over the batch.
Tensor add_positional(const Tensor& tokens, const Tensor& table);

// [N,T,D] <-> [N,D,g,g] for a square g x g token grid.
Tensor tokens_to_grid(const Tensor& tokens, std::size_t grid);
Tensor grid_to_tokens(const Tensor& grid);

inline Tensor avg_pool(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  return avg_pool2d(x, out_h, out_w);
}

// Global average pool over [N,C,H,W] -> [N,C].
Tensor global_avg_pool(const Tensor& x);

}  // namespace DFD_PRECISION_NS
}  // namespace dfd
