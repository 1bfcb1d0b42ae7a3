#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "dfd/models.hpp"
#include "dfd/ops.hpp"
#include "dfd/rng.hpp"
#include "dfd/spectral.hpp"
#include "dfd/verification.hpp"
#include "support/oracles.hpp"

using namespace dfd;

namespace {

std::vector<double> as_vec(std::span<const Real> s) { return {s.begin(), s.end()}; }

void fill(const Tensor& t, Real v) { std::fill(t.mutable_data().begin(), t.mutable_data().end(), v); }

Tensor param(const Module& m, const std::string& name) {
  for (const auto& p : m.parameters())
    if (p.name == name) return p.value;
  for (const auto& p : m.buffers())
    if (p.name == name) return p.value;
  FAIL("no tensor " << name);
  return {};
}

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1, double hi = 1) {
  std::vector<Real> v(numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from_values(std::move(shape), std::move(v));
}

Tensor random_images(std::size_t n, std::size_t size, Rng& rng) {
  return random_tensor({n, 3, size, size}, rng, 0, 1);
}

oracle::ArchDims dims_of(const ModelConfig& c) {
  oracle::ArchDims d;
  d.image = c.image_size;
  d.patch = c.patch_size;
  d.embed = c.embed_dim;
  d.blocks = c.num_blocks;
  d.mlp_ratio = c.mlp_ratio;
  d.cmf_channels = c.cmf_channels;
  d.cmf_layers = c.cmf_conv_layers;
  d.head_hidden = c.head_hidden;
  d.lbp_embed = c.lbp_embed_dim;
  d.classes = c.num_classes;
  d.width = c.xception_width;
  d.middle = c.xception_middle_blocks;
  return d;
}

std::size_t closed_form(const ModelConfig& c) {
  switch (c.arch) {
    case Arch::kCmvit: return oracle::cmvit_count(dims_of(c), false);
    case Arch::kCmvitLbp: return oracle::cmvit_count(dims_of(c), true);
    case Arch::kXception: return oracle::xception_count(dims_of(c));
  }
  return 0;
}

ModelConfig small_config(Arch arch) {
  ModelConfig c = micro_config(arch);
  c.image_size = 16;
  return c;
}

}  // namespace

TEST_CASE("cmf block: shape, zero-projection identity, DC-only spectrum") {
  Rng rng(1);
  CmfBlock block(8, 4, 2, rng);
  const Tensor x = random_tensor({2, 8, 16, 16}, rng);
  CHECK(block.forward(x).shape() == x.shape());

  fill(block.projection().weight(), 0);
  fill(*block.projection().bias(), 0);
  CHECK(as_vec(block.forward(x).data()) == as_vec(x.data()));

  // Each channel constant over space but different across channels, so the
  // channel norm leaves non-zero constant planes.
  // Power-of-two planes, so no zero padding adds frequency content.
  std::vector<Real> planes(1 * 8 * 8 * 8);
  for (std::size_t c = 0; c < 8; ++c)
    std::fill(planes.begin() + c * 64, planes.begin() + (c + 1) * 64, static_cast<Real>(c));
  const Tensor stack = block.magnitude_stack(Tensor::from_values({1, 8, 8, 8}, planes));
  for (std::size_t c = 0; c < 8; ++c) {
    for (std::size_t i = 0; i < 64; ++i) {
      const double v = stack.data()[c * 64 + i];
      if (i == 0) {
        CHECK(v > 0);
      } else {
        CHECK(std::abs(v) < 1e-9);
      }
    }
  }
  CHECK_THROWS_AS(block.forward(Tensor::zeros({8, 16, 16})), ShapeError);
}

TEST_CASE("cmf block frequency branch matches the padded 2-D spectrum") {
  Rng rng(2);
  CmfBlock block(2, 2, 1, rng);
  const Tensor x = random_tensor({1, 2, 3, 3}, rng);
  const Tensor stack = block.magnitude_stack(x);
  // Channel norm by hand, then an oracle DFT of each 4x4 zero-padded plane.
  std::vector<double> xn(18);
  for (std::size_t i = 0; i < 9; ++i) {
    const double a = x.data()[i], b = x.data()[9 + i];
    const double mean = (a + b) / 2, var = ((a - mean) * (a - mean) + (b - mean) * (b - mean)) / 2;
    xn[i] = (a - mean) / std::sqrt(var + 1e-5);
    xn[9 + i] = (b - mean) / std::sqrt(var + 1e-5);
  }
  for (std::size_t c = 0; c < 2; ++c) {
    std::vector<oracle::Cplx> padded(16, 0);
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t k = 0; k < 3; ++k) padded[r * 4 + k] = xn[c * 9 + r * 3 + k];
    const auto ref = oracle::dft2(padded, 4, 4);
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t k = 0; k < 3; ++k)
        CHECK(std::abs(stack.data()[c * 9 + r * 3 + k] - std::abs(ref[r * 4 + k])) < 1e-9);
  }
}

TEST_CASE("mvit block: shape and zero-branch identity") {
  Rng rng(3);
  MvitBlock block(32, 2, 64, rng);
  const Tensor t = random_tensor({2, 16, 32}, rng);
  CHECK(block.forward(t).shape() == t.shape());
  fill(block.attention().out_proj().weight(), 0);
  fill(block.ffn().fc2().weight(), 0);
  CHECK(as_vec(block.forward(t).data()) == as_vec(t.data()));

  MvitBlock fresh(8, 2, 16, rng);
  std::vector<Tensor> inputs;
  for (const auto& p : fresh.parameters()) inputs.push_back(p.value);
  const Tensor x = random_tensor({1, 3, 8}, rng);
  inputs.push_back(x);
  for (auto& p : inputs) p.set_requires_grad(true);
  const Tensor w = random_tensor({1, 3, 8}, rng);
  CHECK(grad_check([&] { return sum(mul(fresh.forward(x), w)); }, inputs, 1e-6) < 1e-4);
}

TEST_CASE("every model yields probability rows; zero head gives uniform output") {
  Rng rng(4);
  for (Arch arch : {Arch::kCmvit, Arch::kCmvitLbp, Arch::kXception}) {
    auto model = make_model(small_config(arch), 5);
    const Tensor images = random_images(3, 16, rng);
    for (Mode mode : {Mode::kTrain, Mode::kEval}) {
      const Tensor p = model->forward(images, mode);
      REQUIRE(p.shape() == Shape{3, 2});
      for (std::size_t r = 0; r < 3; ++r) {
        CHECK(p.data()[2 * r] > 0);
        CHECK(p.data()[2 * r] <= 1);
        CHECK(std::abs(p.data()[2 * r] + p.data()[2 * r + 1] - 1) < 1e-6);
      }
    }
    CHECK_THROWS_AS(model->forward(random_images(1, 8, rng), Mode::kEval), ShapeError);
  }
  auto cmvit = make_model(small_config(Arch::kCmvit), 6);
  fill(param(*cmvit, "head.fc2.weight"), 0);
  fill(param(*cmvit, "head.fc2.bias"), 0);
  for (auto v : as_vec(cmvit->forward(random_images(2, 16, rng), Mode::kEval).data())) CHECK(v == 0.5);
}

TEST_CASE("cmvit+lbp: zeroed LBP embedding reduces to backbone + zero slice") {
  Rng rng(7);
  const ModelConfig cfg = small_config(Arch::kCmvitLbp);
  CmvitLbpModel model(cfg, rng);
  fill(model.lbp_embedding().weight(), 0);
  fill(*model.lbp_embedding().bias(), 0);
  const Tensor images = random_images(2, 16, rng);
  const Tensor features = model.backbone().features(images);
  const Tensor fused =
      concat(std::vector<Tensor>{features, Tensor::zeros({2, cfg.lbp_embed_dim})}, 1);
  CHECK(as_vec(model.logits(images, Mode::kEval).data()) ==
        as_vec(model.head().forward(fused).data()));
}

TEST_CASE("cmvit+lbp: the LBP branch ignores strictly increasing grey remaps") {
  Rng rng(8);
  CmvitLbpModel model(small_config(Arch::kCmvitLbp), rng);
  std::vector<Real> a(2 * 3 * 256), b(a.size());
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t i = 0; i < 256; ++i) {
      const auto v = static_cast<double>(rng.below(128));
      for (std::size_t c = 0; c < 3; ++c) {
        a[(n * 3 + c) * 256 + i] = v / 255;
        b[(n * 3 + c) * 256 + i] = (2 * v + 1) / 255;
      }
    }
  const Tensor x = Tensor::from_values({2, 3, 16, 16}, a);
  const Tensor y = Tensor::from_values({2, 3, 16, 16}, b);
  CHECK(as_vec(model.lbp_branch(x).data()) == as_vec(model.lbp_branch(y).data()));
  const Tensor hist = lbp_histograms(x, LbpConfig{});
  CHECK(hist.shape() == Shape{2, 256});
  double total = 0;
  for (std::size_t i = 0; i < 256; ++i) total += hist.data()[i];
  CHECK(std::abs(total - 1) < 1e-9);
}

TEST_CASE("xception: deterministic eval and middle-block residual identity") {
  Rng rng(9);
  auto model = make_model(small_config(Arch::kXception), 10);
  const Tensor images = random_images(4, 16, rng);
  model->forward(images, Mode::kTrain);
  CHECK(as_vec(model->forward(images, Mode::kEval).data()) ==
        as_vec(model->forward(images, Mode::kEval).data()));

  XceptionMiddleBlock block(4, rng);
  fill(block.separable(2).pointwise().weight(), 0);
  const Tensor x = random_tensor({2, 4, 5, 5}, rng);
  CHECK(as_vec(block.forward(x, Mode::kTrain).data()) == as_vec(x.data()));
  CHECK(as_vec(block.forward(x, Mode::kEval).data()) == as_vec(x.data()));
}

TEST_CASE("parameter counts match the closed form and the registry") {
  CHECK(oracle::xception_count({.classes = 2, .width = 8, .middle = 1}) ==
        count_parameters(*make_model(small_config(Arch::kXception), 1)));
  for (const char* name : {"tiny.ini", "tiny_lbp.ini", "tiny_xception.ini"}) {
    const RunConfig cfg = load_run_config(std::filesystem::path(DFD_CONFIG_DIR) / name);
    auto model = make_model(cfg.model, 1);
    std::size_t enumerated = 0;
    for (const auto& p : model->parameters()) enumerated += p.value.size();
    INFO(name);
    CHECK(count_parameters(*model) == closed_form(cfg.model));
    CHECK(count_parameters(*model) == enumerated);
  }
  CHECK(count_parameters(*make_model(load_run_config(std::filesystem::path(DFD_CONFIG_DIR) /
                                                     "tiny.ini").model, 1)) == 42050);
}

TEST_CASE("property: closed-form counts hold on random configurations") {
  Rng rng(11);
  for (int trial = 0; trial < 25; ++trial) {
    ModelConfig c;
    c.arch = static_cast<Arch>(rng.below(3));
    c.patch_size = 2 + 2 * rng.below(2);
    c.image_size = c.patch_size * (1 + rng.below(3));
    c.num_heads = 1 + rng.below(2);
    c.embed_dim = c.num_heads * (2 + rng.below(3));
    c.num_blocks = 1 + rng.below(2);
    c.mlp_ratio = 1 + rng.below(3);
    c.cmf_channels = 1 + rng.below(4);
    c.cmf_conv_layers = 1 + rng.below(3);
    c.head_hidden = rng.below(2) ? 0 : 1 + rng.below(5);
    c.lbp_embed_dim = 1 + rng.below(4);
    c.xception_width = 2 * (1 + rng.below(4));
    c.xception_middle_blocks = rng.below(3);
    c.num_classes = 2 + rng.below(2);
    INFO(model_config_to_ini(c));
    CHECK(count_parameters(*make_model(c, rng.next())) == closed_form(c));
  }
}

TEST_CASE("paper-scale configurations: closed-form counts") {
  // Rebuilding these models would allocate hundreds of MB; the closed form is
  // cross-checked against the registry on the random configurations above.
  const std::pair<const char*, std::size_t> expected[] = {
      {"paper_cmvit.ini", 71621890}, {"paper_cmvit_lbp.ini", 125537026},
      {"paper_xception.ini", 20813042}};
  for (const auto& [name, count] : expected) {
    const RunConfig cfg = load_run_config(std::filesystem::path(DFD_CONFIG_DIR) / name);
    INFO(name);
    CHECK(closed_form(cfg.model) == count);
  }
}

TEST_CASE("non-trainable state is buffers only") {
  auto x = make_model(small_config(Arch::kXception), 1);
  CHECK(x->buffers().size() == 2 * (2 + 3 + 1));
  CHECK(make_model(small_config(Arch::kCmvit), 1)->buffers().empty());
}

TEST_CASE("checkpoint round-trip is bitwise") {
  Rng rng(12);
  const auto dir = std::filesystem::temp_directory_path() / "dfd_test_ckpt";
  std::filesystem::create_directories(dir);
  for (Arch arch : {Arch::kCmvit, Arch::kCmvitLbp, Arch::kXception}) {
    auto model = make_model(small_config(arch), 13);
    const Tensor images = random_images(3, 16, rng);
    model->forward(images, Mode::kTrain);  // moves batch-norm statistics
    const auto before = as_vec(model->forward(images, Mode::kEval).data());
    save_checkpoint(*model, dir / "m.ckpt");
    auto loaded = load_checkpoint(dir / "m.ckpt");
    CHECK(loaded->config() == model->config());
    CHECK(as_vec(loaded->forward(images, Mode::kEval).data()) == before);
    CHECK(encode_checkpoint(*loaded) == encode_checkpoint(*model));

    auto copy = make_model(small_config(arch), 99);
    copy_state(*model, *copy);
    CHECK(as_vec(copy->forward(images, Mode::kEval).data()) == before);
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "absent.ckpt"), IoError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("checkpoint corruption is rejected") {
  auto model = make_model(small_config(Arch::kCmvit), 3);
  const auto good = encode_checkpoint(*model);
  CHECK_NOTHROW(decode_checkpoint(good));

  auto bad_magic = good;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bad_magic), LoadError);

  auto bad_version = good;
  bad_version[4] = 2;
  CHECK_THROWS_AS(decode_checkpoint(bad_version), LoadError);

  auto patched = good;
  const std::string from = "patch_size = 8", to = "patch_size = 4";
  auto it = std::search(patched.begin(), patched.end(), from.begin(), from.end());
  REQUIRE(it != patched.end());
  std::copy(to.begin(), to.end(), it);
  try {
    decode_checkpoint(patched);
    FAIL("expected a load error");
  } catch (const LoadError& e) {
    CHECK(std::string(e.what()).find("shape mismatch") != std::string::npos);
  }

  auto bad_config = good;
  const std::string arch = "arch = cmvit\n";
  it = std::search(bad_config.begin(), bad_config.end(), arch.begin(), arch.end());
  REQUIRE(it != bad_config.end());
  *(it + 7) = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bad_config), LoadError);

  for (std::size_t cut : {std::size_t{3}, std::size_t{20}, good.size() / 2, good.size() - 1}) {
    std::vector<std::uint8_t> truncated(good.begin(), good.begin() + static_cast<long>(cut));
    CHECK_THROWS_AS(decode_checkpoint(truncated), LoadError);
  }
  auto trailing = good;
  trailing.push_back(0);
  CHECK_THROWS_AS(decode_checkpoint(trailing), LoadError);

  auto other = make_model(small_config(Arch::kXception), 3);
  CHECK_THROWS_AS(copy_state(*other, *model), ShapeError);
}

TEST_CASE("full-model gradients on the micro configuration") {
  GradSuiteOptions options;
  std::vector<GradCheckResult> models;
  for (const auto& r : run_gradient_suite(options)) {
    INFO(r.name << " error " << r.error);
    CHECK(r.passed());
    if (r.name.rfind("model_", 0) == 0) models.push_back(r);
  }
  CHECK(models.size() == 3);
}
