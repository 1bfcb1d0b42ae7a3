#include "dfd/models.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <map>

#include "dfd/image.hpp"
#include "dfd/lbp.hpp"
#include "dfd/ops.hpp"
#include "dfd/spectral.hpp"

namespace dfd {
inline namespace DFD_PRECISION_NS {

CmfBlock::CmfBlock(std::size_t channels, std::size_t branch_channels, std::size_t conv_layers,
                   Rng& rng)
    : norm_(channels),
      project_(channels + branch_channels, channels, Conv2dOptions{.kernel = 1}, rng) {
  register_module("norm", norm_);
  for (std::size_t i = 0; i < conv_layers; ++i) {
    const std::size_t in = i == 0 ? channels : branch_channels;
    convs_.push_back(std::make_unique<Conv2d>(
        in, branch_channels, Conv2dOptions{.kernel = 3, .padding = 1}, rng));
    register_module("conv" + std::to_string(i), *convs_.back());
  }
  register_module("project", project_);
}

Tensor CmfBlock::normalize(const Tensor& x) const {
  // Layer norm across channels at every spatial position.
  return permute(norm_.forward(permute(x, {0, 2, 3, 1})), {0, 3, 1, 2});
}

Tensor CmfBlock::magnitude_stack(const Tensor& x) const { return fft_magnitude(normalize(x)); }

Tensor CmfBlock::forward(const Tensor& x) const {
  if (x.rank() != 4) throw ShapeError("CMF block expects [N,C,H,W], got " + shape_str(x.shape()));
  const Tensor xn = normalize(x);
  Tensor features = fft_magnitude(xn);
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    features = convs_[i]->forward(features);
    if (i + 1 < convs_.size()) features = relu(features);
  }
  const Tensor fused = concat(std::vector<Tensor>{xn, features}, 1);
  return add(x, project_.forward(fused));
}

MvitBlock::MvitBlock(std::size_t dim, std::size_t heads, std::size_t hidden, Rng& rng)
    : norm1_(dim), attn_(dim, heads, rng), norm2_(dim), ffn_(dim, hidden, rng) {
  register_module("norm1", norm1_);
  register_module("attn", attn_);
  register_module("norm2", norm2_);
  register_module("ffn", ffn_);
}

Tensor MvitBlock::forward(const Tensor& tokens) const {
  const Tensor t1 = add(tokens, attn_.forward(norm1_.forward(tokens)));
  return add(t1, ffn_.forward(norm2_.forward(t1)));
}

MvitCmfBlock::MvitCmfBlock(const ModelConfig& config, Rng& rng)
    : grid_(config.grid()),
      cmf_(config.embed_dim, config.cmf_channels, config.cmf_conv_layers, rng),
      mvit_(config.embed_dim, config.num_heads, config.mlp_ratio * config.embed_dim, rng) {
  register_module("cmf", cmf_);
  register_module("", mvit_);
}

Tensor MvitCmfBlock::forward(const Tensor& tokens) const {
  const Tensor fused = grid_to_tokens(cmf_.forward(tokens_to_grid(tokens, grid_)));
  return mvit_.forward(fused);
}

ClassifierHead::ClassifierHead(std::size_t in_features, std::size_t hidden, std::size_t classes,
                               Rng& rng) {
  if (hidden > 0) {
    hidden_ = std::make_unique<Linear>(in_features, hidden, rng);
    register_module("fc1", *hidden_);
  }
  out_ = std::make_unique<Linear>(hidden > 0 ? hidden : in_features, classes, rng);
  register_module(hidden > 0 ? "fc2" : "fc", *out_);
}

Tensor ClassifierHead::forward(const Tensor& features) const {
  return out_->forward(hidden_ ? relu(hidden_->forward(features)) : features);
}

Model::Model(ModelConfig config) : config_(std::move(config)) { config_.validate(); }

Tensor Model::forward(const Tensor& images, Mode mode) { return softmax(logits(images, mode), 1); }

void Model::check_input(const Tensor& images) const {
  const std::size_t s = config_.image_size;
  if (images.rank() != 4 || images.extent(1) != 3 || images.extent(2) != s ||
      images.extent(3) != s) {
    throw ShapeError("model expects images [N,3," + std::to_string(s) + "," + std::to_string(s) +
                     "], got " + shape_str(images.shape()));
  }
}

CmvitBackbone::CmvitBackbone(const ModelConfig& config, Rng& rng)
    : grid_(config.grid()), patch_embed_(3, config.embed_dim, config.patch_size, rng) {
  register_module("patch_embed", patch_embed_);
  table_ = register_parameter("pos_table", Tensor::zeros({grid_ * grid_, config.embed_dim}));
  for (std::size_t i = 0; i < config.num_blocks; ++i) {
    blocks_.push_back(std::make_unique<MvitCmfBlock>(config, rng));
    register_module("block" + std::to_string(i), *blocks_.back());
  }
}

Tensor CmvitBackbone::features(const Tensor& images) const {
  Tensor tokens = add_positional(patch_embed_.forward(images), table_);
  for (const auto& block : blocks_) tokens = block->forward(tokens);
  return global_avg_pool(tokens_to_grid(tokens, grid_));
}

CmvitModel::CmvitModel(const ModelConfig& config, Rng& rng)
    : Model(config),
      backbone_(config, rng),
      head_(config.embed_dim, config.head_hidden, config.num_classes, rng) {
  register_module("", backbone_);
  register_module("head", head_);
}

Tensor CmvitModel::logits(const Tensor& images, Mode) {
  check_input(images);
  return head_.forward(backbone_.features(images));
}

Tensor lbp_histograms(const Tensor& images, const LbpConfig& config) {
  if (images.rank() != 4 || images.extent(1) != 3) {
    throw ShapeError("LBP histograms expect [N,3,H,W], got " + shape_str(images.shape()));
  }
  const std::size_t n = images.extent(0), h = images.extent(2), w = images.extent(3);
  const std::size_t plane = h * w;
  auto v = images.data();
  auto quantize = [](Real x) {
    const long q = std::lround(static_cast<double>(x) * 255.0);
    return static_cast<std::uint8_t>(std::clamp(q, 0L, 255L));
  };
  std::vector<Real> out;
  out.reserve(n * kLbpBins);
  for (std::size_t s = 0; s < n; ++s) {
    GrayImage gray{h, w, std::vector<std::uint8_t>(plane)};
    const Real* base = v.data() + s * 3 * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      gray.values[i] =
          luminance(quantize(base[i]), quantize(base[plane + i]), quantize(base[2 * plane + i]));
    }
    for (double b : lbp_histogram(lbp_map(gray, config), true)) out.push_back(static_cast<Real>(b));
  }
  return Tensor::from_values({n, kLbpBins}, std::move(out));
}

CmvitLbpModel::CmvitLbpModel(const ModelConfig& config, Rng& rng)
    : Model(config),
      backbone_(config, rng),
      lbp_embed_(kLbpBins, config.lbp_embed_dim, rng),
      head_(config.embed_dim + config.lbp_embed_dim, config.head_hidden, config.num_classes, rng) {
  register_module("", backbone_);
  register_module("lbp_embed", lbp_embed_);
  register_module("head", head_);
}

Tensor CmvitLbpModel::lbp_branch(const Tensor& images) const {
  return lbp_embed_.forward(lbp_histograms(images, config().lbp));
}

Tensor CmvitLbpModel::logits(const Tensor& images, Mode) {
  check_input(images);
  const Tensor fused =
      concat(std::vector<Tensor>{backbone_.features(images), lbp_branch(images)}, 1);
  return head_.forward(fused);
}

XceptionMiddleBlock::XceptionMiddleBlock(std::size_t channels, Rng& rng) {
  for (std::size_t i = 0; i < 3; ++i) {
    seps_.push_back(std::make_unique<DepthwiseSeparable>(channels, channels, 3, rng));
    norms_.push_back(std::make_unique<BatchNorm>(channels));
    register_module("sep" + std::to_string(i), *seps_.back());
    register_module("bn" + std::to_string(i), *norms_.back());
  }
}

Tensor XceptionMiddleBlock::forward(const Tensor& x, Mode mode) {
  Tensor y = x;
  for (std::size_t i = 0; i < seps_.size(); ++i) {
    y = relu(norms_[i]->forward(seps_[i]->forward(y), mode));
  }
  return add(x, y);
}

XceptionModel::XceptionModel(const ModelConfig& config, Rng& rng)
    : Model(config),
      conv1_(3, config.xception_width / 2,
             Conv2dOptions{.kernel = 3, .stride = 2, .padding = 1, .floor_extent = true}, rng),
      bn1_(config.xception_width / 2),
      conv2_(config.xception_width / 2, config.xception_width,
             Conv2dOptions{.kernel = 3, .padding = 1}, rng),
      bn2_(config.xception_width),
      exit_sep_(config.xception_width, 2 * config.xception_width, 3, rng),
      exit_bn_(2 * config.xception_width),
      fc_(2 * config.xception_width, config.num_classes, rng) {
  register_module("entry.conv1", conv1_);
  register_module("entry.bn1", bn1_);
  register_module("entry.conv2", conv2_);
  register_module("entry.bn2", bn2_);
  for (std::size_t i = 0; i < config.xception_middle_blocks; ++i) {
    middle_.push_back(std::make_unique<XceptionMiddleBlock>(config.xception_width, rng));
    register_module("middle" + std::to_string(i), *middle_.back());
  }
  register_module("exit.sep", exit_sep_);
  register_module("exit.bn", exit_bn_);
  register_module("fc", fc_);
}

Tensor XceptionModel::logits(const Tensor& images, Mode mode) {
  check_input(images);
  Tensor x = relu(bn1_.forward(conv1_.forward(images), mode));
  x = relu(bn2_.forward(conv2_.forward(x), mode));
  for (auto& block : middle_) x = block->forward(x, mode);
  x = relu(exit_bn_.forward(exit_sep_.forward(x), mode));
  return fc_.forward(global_avg_pool(x));
}

std::unique_ptr<Model> make_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  switch (config.arch) {
    case Arch::kCmvit: return std::make_unique<CmvitModel>(config, rng);
    case Arch::kCmvitLbp: return std::make_unique<CmvitLbpModel>(config, rng);
    case Arch::kXception: return std::make_unique<XceptionModel>(config, rng);
  }
  throw ContractError("unknown architecture");
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::span<const std::uint8_t> take(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw LoadError("checkpoint truncated");
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32() {
    auto s = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(s[i]) << (8 * i);
    return v;
  }
  double f64() {
    auto s = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(s[i]) << (8 * i);
    return std::bit_cast<double>(v);
  }
  std::string text(std::size_t n) {
    auto s = take(n);
    return {s.begin(), s.end()};
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::vector<Parameter> state_of(const Model& model) {
  auto entries = model.parameters();
  for (auto& b : model.buffers()) entries.push_back(std::move(b));
  return entries;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Model& model) {
  std::vector<std::uint8_t> out{'C', 'M', 'V', 'K'};
  put_u32(out, kCheckpointVersion);
  const std::string config = model_config_to_ini(model.config());
  put_u32(out, static_cast<std::uint32_t>(config.size()));
  out.insert(out.end(), config.begin(), config.end());
  const auto entries = state_of(model);
  put_u32(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    put_u32(out, static_cast<std::uint32_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    put_u32(out, static_cast<std::uint32_t>(e.value.rank()));
    for (std::size_t extent : e.value.shape()) put_u32(out, static_cast<std::uint32_t>(extent));
    for (Real v : e.value.data()) put_f64(out, static_cast<double>(v));
  }
  return out;
}

std::unique_ptr<Model> decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  const auto magic = in.take(4);
  if (!std::equal(magic.begin(), magic.end(), "CMVK")) throw LoadError("bad checkpoint magic");
  const std::uint32_t version = in.u32();
  if (version != kCheckpointVersion) {
    throw LoadError("unsupported checkpoint version " + std::to_string(version));
  }
  ModelConfig config;
  try {
    config = model_config_from_ini(in.text(in.u32()));
    config.validate();
  } catch (const ParseError& e) {
    throw LoadError(std::string("checkpoint config: ") + e.what());
  } catch (const ContractError& e) {
    throw LoadError(std::string("checkpoint config: ") + e.what());
  }
  auto model = make_model(config, 0);
  std::map<std::string, Tensor> slots;
  for (auto& e : state_of(*model)) slots.emplace(e.name, e.value);

  const std::uint32_t count = in.u32();
  std::size_t filled = 0;
  for (std::uint32_t r = 0; r < count; ++r) {
    const std::string name = in.text(in.u32());
    const std::uint32_t rank = in.u32();
    Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(in.u32());
    auto it = slots.find(name);
    if (it == slots.end()) throw LoadError("checkpoint has unknown tensor '" + name + "'");
    if (it->second.shape() != shape) {
      throw LoadError("shape mismatch for '" + name + "': checkpoint " + shape_str(shape) +
                      ", model " + shape_str(it->second.shape()));
    }
    auto dst = it->second.mutable_data();
    for (auto& v : dst) v = static_cast<Real>(in.f64());
    ++filled;
  }
  if (filled != slots.size() || count != slots.size()) {
    throw LoadError("checkpoint covers " + std::to_string(filled) + " of " +
                    std::to_string(slots.size()) + " tensors");
  }
  if (!in.done()) throw LoadError("trailing bytes after checkpoint records");
  return model;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  write_file(path, encode_checkpoint(model));
}

std::unique_ptr<Model> load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_checkpoint(bytes);
  } catch (const LoadError& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
}

void copy_state(const Model& from, Model& to) {
  const auto src = state_of(from);
  auto dst = state_of(to);
  if (src.size() != dst.size()) throw ShapeError("copy_state between different architectures");
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i].name != dst[i].name || src[i].value.shape() != dst[i].value.shape()) {
      throw ShapeError("copy_state mismatch at '" + src[i].name + "'");
    }
    auto d = dst[i].value.mutable_data();
    std::copy(src[i].value.data().begin(), src[i].value.data().end(), d.begin());
  }
}

}  // namespace DFD_PRECISION_NS
}  // namespace dfd
