#include "dfd/verification.hpp"

#include "dfd/functional.hpp"
#include "dfd/layers.hpp"
#include "dfd/models.hpp"
#include "dfd/ops.hpp"
#include "dfd/rng.hpp"
#include "dfd/spectral.hpp"
#include "dfd/train.hpp"

namespace dfd {
inline namespace DFD_PRECISION_NS {
namespace {

// Values with |v| in [0.1, 1] keep ReLU inputs away from the kink.
Tensor random_tensor(Shape shape, Rng& rng) {
  std::vector<Real> values(numel(shape));
  for (auto& v : values) {
    const double magnitude = rng.uniform(0.1, 1.0);
    v = static_cast<Real>(rng.uniform() < 0.5 ? -magnitude : magnitude);
  }
  return Tensor::from_values(std::move(shape), std::move(values));
}

// Scalar probe: <y, w> for a fixed random w, so no output coordinate cancels.
class Probe {
 public:
  explicit Probe(Rng& rng) : rng_(rng) {}

  Tensor operator()(const Tensor& y) {
    if (!weights_.size() || weights_.shape() != y.shape()) weights_ = random_tensor(y.shape(), rng_);
    return sum(mul(y, weights_));
  }

 private:
  Rng& rng_;
  Tensor weights_;
};

std::vector<Tensor> tensors_of(const Module& module) {
  std::vector<Tensor> out;
  for (const auto& p : module.parameters()) out.push_back(p.value);
  return out;
}

class Suite {
 public:
  Suite(const GradSuiteOptions& options, const std::function<void(const GradCheckResult&)>& cb)
      : options_(options), callback_(cb), rng_(options.seed) {}

  // fn closes over `inputs`; every input gets requires_grad for the check.
  void check(const std::string& name, std::vector<Tensor> inputs,
             const std::function<Tensor()>& fn, bool model_level = false) {
    for (auto& t : inputs) t.set_requires_grad(true);
    GradCheckResult r{name, grad_check(fn, inputs, options_.step),
                      model_level ? options_.model_tolerance : options_.layer_tolerance};
    results_.push_back(r);
    if (callback_) callback_(r);
  }

  Rng& rng() { return rng_; }
  Tensor rand(Shape shape) { return random_tensor(std::move(shape), rng_); }
  std::vector<GradCheckResult> take() { return std::move(results_); }

 private:
  GradSuiteOptions options_;
  std::function<void(const GradCheckResult&)> callback_;
  Rng rng_;
  std::vector<GradCheckResult> results_;
};

void op_checks(Suite& s) {
  Probe probe(s.rng());
  {
    Tensor a = s.rand({3, 4}), b = s.rand({4, 5});
    s.check("matmul", {a, b}, [=, &probe] { return probe(matmul(a, b)); });
  }
  {
    Tensor a = s.rand({2, 3, 4}), b = s.rand({2, 5, 4});
    s.check("bmm_transposed", {a, b}, [=, &probe] { return probe(bmm(a, b, true)); });
    Tensor c = s.rand({2, 4, 3});
    s.check("bmm", {a, c}, [=, &probe] { return probe(bmm(a, c)); });
  }
  {
    Tensor a = s.rand({3, 4}), b = s.rand({3, 4}), bias = s.rand({4});
    s.check("add_broadcast", {a, bias}, [=, &probe] { return probe(add(a, bias)); });
    s.check("sub", {a, b}, [=, &probe] { return probe(sub(a, b)); });
    s.check("mul", {a, b}, [=, &probe] { return probe(mul(a, b)); });
    s.check("mul_broadcast", {a, bias}, [=, &probe] { return probe(mul(a, bias)); });
    s.check("scale", {a}, [=, &probe] { return probe(scale(a, Real(-1.7))); });
  }
  {
    Tensor a = s.rand({2, 3, 4});
    s.check("sum_axis", {a}, [=, &probe] { return probe(sum(a, 1)); });
    s.check("mean_axis", {a}, [=, &probe] { return probe(mean(a, 2)); });
    s.check("mean_all", {a}, [=] { return scale(mean(a), Real(3)); });
    s.check("reshape_permute", {a},
            [=, &probe] { return probe(permute(reshape(a, {4, 6}), {1, 0})); });
    s.check("permute_rank3", {a}, [=, &probe] { return probe(permute(a, {2, 0, 1})); });
    s.check("relu", {a}, [=, &probe] { return probe(relu(a)); });
    s.check("softmax", {a}, [=, &probe] { return probe(softmax(a, 1)); });
    Tensor b = s.rand({2, 2, 4});
    s.check("concat", {a, b},
            [=, &probe] { return probe(concat(std::vector<Tensor>{a, b}, 1)); });
  }
  {
    Tensor logits = s.rand({4, 3});
    const std::vector<int> labels = {0, 2, 1, 2};
    s.check("cross_entropy", {logits}, [=] { return cross_entropy(logits, labels); });
  }
}

void layer_checks(Suite& s) {
  Probe probe(s.rng());
  {
    Tensor x = s.rand({2, 3, 5}), w = s.rand({4, 5}), b = s.rand({4});
    s.check("linear", {x, w, b}, [=, &probe] { return probe(linear(x, w, b)); });
  }
  {
    Tensor x = s.rand({2, 4, 7, 7}), w = s.rand({6, 2, 3, 3}), b = s.rand({6});
    Tensor even = s.rand({2, 4, 6, 6});
    s.check("conv2d_grouped_strided", {x, w, b}, [=, &probe] {
      return probe(conv2d(x, w, b, Conv2dGeometry{.stride = 2, .padding = 1, .groups = 2}));
    });
    Tensor dw = s.rand({4, 1, 3, 3});
    s.check("conv2d_depthwise", {x, dw}, [=, &probe] {
      return probe(conv2d(x, dw, std::nullopt, Conv2dGeometry{.padding = 1, .groups = 4}));
    });
    s.check("conv2d_floor_extent", {even, w}, [=, &probe] {
      return probe(conv2d(even, w, std::nullopt,
                          Conv2dGeometry{.stride = 2, .padding = 1, .groups = 2,
                                         .floor_extent = true}));
    });
  }
  {
    Tensor x = s.rand({2, 3, 6}), g = s.rand({6}), b = s.rand({6});
    s.check("layer_norm", {x, g, b}, [=, &probe] { return probe(layer_norm(x, g, b, Real(1e-5))); });
  }
  {
    Tensor x = s.rand({3, 2, 4, 4}), g = s.rand({2}), b = s.rand({2});
    BatchNormState state{Tensor::zeros({2}), Tensor::filled({2}, Real(1))};
    s.check("batch_norm_train", {x, g, b},
            [=, &probe]() mutable { return probe(batch_norm(x, g, b, state, true)); });
    s.check("batch_norm_eval", {x, g, b},
            [=, &probe]() mutable { return probe(batch_norm(x, g, b, state, false)); });
  }
  {
    Tensor x = s.rand({2, 3, 4, 6});
    s.check("avg_pool2d", {x}, [=, &probe] { return probe(avg_pool2d(x, 2, 3)); });
  }
  {
    Tensor x = s.rand({2, 3, 5, 6});
    s.check("fft_magnitude", {x}, [=, &probe] { return probe(fft_magnitude(x)); });
    Tensor y = s.rand({1, 2, 4, 4});
    s.check("fft_magnitude_pow2", {y}, [=, &probe] { return probe(fft_magnitude(y)); });
  }

  auto module_check = [&](const std::string& name, const Module& m, Tensor input,
                          std::function<Tensor(const Tensor&)> forward) {
    auto inputs = tensors_of(m);
    inputs.push_back(input);
    s.check(name, inputs, [=, &probe] { return probe(forward(input)); });
  };
  {
    Rng init(s.rng().next());
    MultiHeadAttention attn(8, 2, init);
    module_check("attention", attn, s.rand({2, 5, 8}),
                 [&](const Tensor& t) { return attn.forward(t); });
    FeedForward ffn(8, 16, init);
    module_check("feed_forward", ffn, s.rand({2, 5, 8}),
                 [&](const Tensor& t) { return ffn.forward(t); });
    PatchEmbed embed(3, 8, 4, init);
    module_check("patch_embed", embed, s.rand({2, 3, 8, 8}),
                 [&](const Tensor& t) { return embed.forward(t); });
    Tensor table = s.rand({4, 8}), tokens = s.rand({2, 4, 8});
    s.check("add_positional", {tokens, table},
            [=, &probe] { return probe(add_positional(tokens, table)); });
    s.check("token_grid_roundtrip", {tokens},
            [=, &probe] { return probe(grid_to_tokens(scale(tokens_to_grid(tokens, 2), 2))); });
    DepthwiseSeparable sep(4, 6, 3, init);
    module_check("depthwise_separable", sep, s.rand({2, 4, 5, 5}),
                 [&](const Tensor& t) { return sep.forward(t); });
    Linear lin(6, 3, init);
    module_check("linear_module", lin, s.rand({4, 6}),
                 [&](const Tensor& t) { return lin.forward(t); });
    LayerNorm ln(6);
    module_check("layer_norm_module", ln, s.rand({4, 6}),
                 [&](const Tensor& t) { return ln.forward(t); });
    CmfBlock cmf(4, 5, 2, init);
    module_check("cmf_block", cmf, s.rand({2, 4, 3, 5}),
                 [&](const Tensor& t) { return cmf.forward(t); });
    MvitBlock mvit(8, 2, 16, init);
    module_check("mvit_block", mvit, s.rand({2, 4, 8}),
                 [&](const Tensor& t) { return mvit.forward(t); });
    XceptionMiddleBlock middle(4, init);
    module_check("xception_middle_block", middle, s.rand({3, 4, 4, 4}),
                 [&](const Tensor& t) { return middle.forward(t, Mode::kTrain); });
  }
}

void model_checks(Suite& s) {
  for (Arch arch : {Arch::kCmvit, Arch::kCmvitLbp, Arch::kXception}) {
    const ModelConfig cfg = micro_config(arch);
    auto model = make_model(cfg, s.rng().next());
    // Images in [0,1] like real inputs; labels of both classes.
    std::vector<Real> pixels(2 * 3 * cfg.image_size * cfg.image_size);
    for (auto& p : pixels) p = static_cast<Real>(s.rng().uniform());
    const Tensor images = Tensor::from_values({2, 3, cfg.image_size, cfg.image_size}, pixels);
    const std::vector<int> labels = {0, 1};
    Model* m = model.get();
    s.check("model_" + arch_name(arch), tensors_of(*model),
            [=] { return cross_entropy(m->logits(images, Mode::kTrain), labels); },
            /*model_level=*/true);
  }
}

}  // namespace

ModelConfig micro_config(Arch arch) {
  ModelConfig cfg;
  cfg.arch = arch;
  cfg.image_size = 16;
  cfg.patch_size = 8;
  cfg.embed_dim = 16;
  cfg.num_heads = 2;
  cfg.num_blocks = 1;
  cfg.mlp_ratio = 2;
  cfg.cmf_channels = 8;
  cfg.cmf_conv_layers = 2;
  cfg.head_hidden = 16;
  cfg.lbp_embed_dim = 8;
  cfg.xception_width = 8;
  cfg.xception_middle_blocks = 1;
  return cfg;
}

std::vector<GradCheckResult> run_gradient_suite(
    const GradSuiteOptions& options, const std::function<void(const GradCheckResult&)>& on_result) {
  Suite suite(options, on_result);
  op_checks(suite);
  layer_checks(suite);
  if (options.include_models) model_checks(suite);
  return suite.take();
}

}  // namespace DFD_PRECISION_NS
}  // namespace dfd
