#include "dfd/layers.hpp"

#include <cmath>

#include "dfd/ops.hpp"

namespace dfd {
inline namespace DFD_PRECISION_NS {

std::vector<Parameter> Module::parameters() const {
  std::vector<Parameter> out;
  collect("", false, out);
  return out;
}

std::vector<Parameter> Module::buffers() const {
  std::vector<Parameter> out;
  collect("", true, out);
  return out;
}

void Module::zero_grad() {
  for (auto& p : parameters()) p.value.zero_grad();
}

Tensor Module::register_parameter(std::string name, Tensor value) {
  // The gradient buffer is allocated (zero-filled) on first access.
  value.set_requires_grad(true);
  params_.push_back({std::move(name), value});
  return value;
}

Tensor Module::register_buffer(std::string name, Tensor value) {
  buffers_.push_back({std::move(name), value});
  return value;
}

void Module::register_module(std::string name, Module& child) {
  children_.emplace_back(std::move(name), &child);
}

void Module::collect(const std::string& prefix, bool want_buffers,
                     std::vector<Parameter>& out) const {
  for (const auto& p : want_buffers ? buffers_ : params_) out.push_back({prefix + p.name, p.value});
  for (const auto& [name, child] : children_) {
    child->collect(name.empty() ? prefix : prefix + name + ".", want_buffers, out);
  }
}

std::size_t count_parameters(const Module& module) {
  std::size_t total = 0;
  for (const auto& p : module.parameters()) total += p.value.size();
  return total;
}

Tensor init_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<Real> values(numel(shape));
  for (auto& v : values) v = static_cast<Real>(rng.uniform(-bound, bound));
  return Tensor::from_values(std::move(shape), std::move(values));
}

Linear::Linear(std::size_t in_features, std::size_t out_features, Rng& rng, bool has_bias)
    : in_(in_features), out_(out_features) {
  weight_ = register_parameter("weight", init_uniform({out_, in_}, in_, rng));
  if (has_bias) bias_ = register_parameter("bias", Tensor::zeros({out_}));
}

Tensor Linear::forward(const Tensor& x) const { return linear(x, weight_, bias_); }

Conv2d::Conv2d(std::size_t in_channels, std::size_t out_channels, const Conv2dOptions& options,
               Rng& rng)
    : in_(in_channels),
      out_(out_channels),
      geometry_{options.stride, options.padding, options.groups, options.floor_extent} {
  if (options.groups == 0 || in_ % options.groups != 0 || out_ % options.groups != 0) {
    throw ShapeError("conv channels " + std::to_string(in_) + "->" + std::to_string(out_) +
                     " not divisible by groups " + std::to_string(options.groups));
  }
  const std::size_t per_group = in_ / options.groups;
  const std::size_t fan_in = per_group * options.kernel * options.kernel;
  weight_ = register_parameter(
      "weight", init_uniform({out_, per_group, options.kernel, options.kernel}, fan_in, rng));
  if (options.has_bias) bias_ = register_parameter("bias", Tensor::zeros({out_}));
}

Tensor Conv2d::forward(const Tensor& x) const {
  if (x.rank() != 4 || x.extent(1) != in_) {
    throw ShapeError("conv expects " + std::to_string(in_) + " input channels, got " +
                     shape_str(x.shape()));
  }
  return conv2d(x, weight_, bias_, geometry_);
}

DepthwiseSeparable::DepthwiseSeparable(std::size_t in_channels, std::size_t out_channels,
                                       std::size_t kernel, Rng& rng)
    : depthwise_(in_channels, in_channels,
                 Conv2dOptions{.kernel = kernel, .padding = kernel / 2, .groups = in_channels}, rng),
      pointwise_(in_channels, out_channels, Conv2dOptions{.kernel = 1}, rng) {
  register_module("depthwise", depthwise_);
  register_module("pointwise", pointwise_);
}

Tensor DepthwiseSeparable::forward(const Tensor& x) const {
  return pointwise_.forward(depthwise_.forward(x));
}

LayerNorm::LayerNorm(std::size_t features, Real eps) : eps_(eps) {
  gamma_ = register_parameter("gamma", Tensor::filled({features}, Real(1)));
  beta_ = register_parameter("beta", Tensor::zeros({features}));
}

Tensor LayerNorm::forward(const Tensor& x) const { return layer_norm(x, gamma_, beta_, eps_); }

BatchNorm::BatchNorm(std::size_t features, Real momentum, Real eps) {
  gamma_ = register_parameter("gamma", Tensor::filled({features}, Real(1)));
  beta_ = register_parameter("beta", Tensor::zeros({features}));
  state_.running_mean = register_buffer("running_mean", Tensor::zeros({features}));
  state_.running_var = register_buffer("running_var", Tensor::filled({features}, Real(1)));
  state_.momentum = momentum;
  state_.eps = eps;
}

Tensor BatchNorm::forward(const Tensor& x, Mode mode) {
  return batch_norm(x, gamma_, beta_, state_, mode == Mode::kTrain);
}

MultiHeadAttention::MultiHeadAttention(std::size_t embed_dim, std::size_t num_heads, Rng& rng)
    : dim_(embed_dim),
      heads_(num_heads),
      q_(embed_dim, embed_dim, rng),
      k_(embed_dim, embed_dim, rng),
      v_(embed_dim, embed_dim, rng),
      o_(embed_dim, embed_dim, rng) {
  if (num_heads == 0 || embed_dim % num_heads != 0) {
    throw ShapeError("embed_dim " + std::to_string(embed_dim) + " not divisible by " +
                     std::to_string(num_heads) + " heads");
  }
  register_module("q_proj", q_);
  register_module("k_proj", k_);
  register_module("v_proj", v_);
  register_module("out_proj", o_);
}

Tensor MultiHeadAttention::forward(const Tensor& tokens) const {
  if (tokens.rank() != 3 || tokens.extent(2) != dim_) {
    throw ShapeError("attention expects [N,T," + std::to_string(dim_) + "], got " +
                     shape_str(tokens.shape()));
  }
  const std::size_t n = tokens.extent(0), t = tokens.extent(1), hd = dim_ / heads_;
  auto split_heads = [&](const Tensor& x) {
    return reshape(permute(reshape(x, {n, t, heads_, hd}), {0, 2, 1, 3}), {n * heads_, t, hd});
  };
  const Tensor q = split_heads(q_.forward(tokens));
  const Tensor k = split_heads(k_.forward(tokens));
  const Tensor v = split_heads(v_.forward(tokens));
  const Real inv_scale = Real(1) / std::sqrt(static_cast<Real>(hd));
  const Tensor weights = softmax(scale(bmm(q, k, /*transpose_b=*/true), inv_scale), 2);
  const Tensor context = bmm(weights, v);
  const Tensor merged =
      reshape(permute(reshape(context, {n, heads_, t, hd}), {0, 2, 1, 3}), {n, t, dim_});
  return o_.forward(merged);
}

FeedForward::FeedForward(std::size_t dim, std::size_t hidden, Rng& rng)
    : fc1_(dim, hidden, rng), fc2_(hidden, dim, rng) {
  register_module("fc1", fc1_);
  register_module("fc2", fc2_);
}

Tensor FeedForward::forward(const Tensor& x) const { return fc2_.forward(relu(fc1_.forward(x))); }

PatchEmbed::PatchEmbed(std::size_t in_channels, std::size_t embed_dim, std::size_t patch, Rng& rng)
    : patch_(patch),
      proj_(in_channels, embed_dim, Conv2dOptions{.kernel = patch, .stride = patch}, rng) {
  register_module("proj", proj_);
}

Tensor PatchEmbed::forward(const Tensor& x) const {
  if (x.rank() != 4 || x.extent(2) % patch_ != 0 || x.extent(3) % patch_ != 0) {
    throw ShapeError("image " + shape_str(x.shape()) + " is not divisible into " +
                     std::to_string(patch_) + "x" + std::to_string(patch_) + " patches");
  }
  const Tensor grid = proj_.forward(x);  // [N, D, gh, gw]
  const std::size_t n = grid.extent(0), d = grid.extent(1);
  const std::size_t tokens = grid.extent(2) * grid.extent(3);
  return permute(reshape(grid, {n, d, tokens}), {0, 2, 1});
}

Tensor add_positional(const Tensor& tokens, const Tensor& table) {
  if (tokens.rank() != 3 || table.rank() != 2 || tokens.extent(1) != table.extent(0) ||
      tokens.extent(2) != table.extent(1)) {
    throw ShapeError("positional table " + shape_str(table.shape()) + " does not match tokens " +
                     shape_str(tokens.shape()));
  }
  const std::size_t n = tokens.extent(0), t = tokens.extent(1), d = tokens.extent(2);
  return reshape(add(reshape(tokens, {n, t * d}), reshape(table, {t * d})), {n, t, d});
}

Tensor tokens_to_grid(const Tensor& tokens, std::size_t grid) {
  if (tokens.rank() != 3 || tokens.extent(1) != grid * grid) {
    throw ShapeError("cannot arrange " + shape_str(tokens.shape()) + " on a " +
                     std::to_string(grid) + "x" + std::to_string(grid) + " grid");
  }
  const std::size_t n = tokens.extent(0), d = tokens.extent(2);
  return permute(reshape(tokens, {n, grid, grid, d}), {0, 3, 1, 2});
}

Tensor grid_to_tokens(const Tensor& grid) {
  if (grid.rank() != 4) throw ShapeError("grid expected, got " + shape_str(grid.shape()));
  const std::size_t n = grid.extent(0), d = grid.extent(1);
  const std::size_t t = grid.extent(2) * grid.extent(3);
  return reshape(permute(grid, {0, 2, 3, 1}), {n, t, d});
}

Tensor global_avg_pool(const Tensor& x) {
  const Tensor pooled = avg_pool2d(x, 1, 1);
  return reshape(pooled, {pooled.extent(0), pooled.extent(1)});
}

}  // namespace DFD_PRECISION_NS
}  // namespace dfd
