#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "dfd/config.hpp"
#include "dfd/layers.hpp"

namespace dfd {
inline namespace DFD_PRECISION_NS {

// Frequency-fusion block over a feature map [N,C,H,W]:
//   xn   = channel layer norm of x
//   spec = |FFT2(xn)| per channel (zero-padded to powers of two, cropped back)
//   f    = 3x3 convs over spec with ReLU between
//   out  = x + project_1x1(concat(xn, f))
class CmfBlock : public Module {
 public:
  CmfBlock(std::size_t channels, std::size_t branch_channels, std::size_t conv_layers, Rng& rng);

  Tensor forward(const Tensor& x) const;
  // The magnitude stack feeding the convs.
  Tensor magnitude_stack(const Tensor& x) const;

  Conv2d& projection() { return project_; }

 private:
  Tensor normalize(const Tensor& x) const;

  LayerNorm norm_;
  std::vector<std::unique_ptr<Conv2d>> convs_;
  Conv2d project_;
};

// Pre-norm transformer block: t1 = t + attn(ln1(t)); out = t1 + ffn(ln2(t1)).
class MvitBlock : public Module {
 public:
  MvitBlock(std::size_t dim, std::size_t heads, std::size_t hidden, Rng& rng);

  Tensor forward(const Tensor& tokens) const;

  MultiHeadAttention& attention() { return attn_; }
  FeedForward& ffn() { return ffn_; }

 private:
  LayerNorm norm1_;
  MultiHeadAttention attn_;
  LayerNorm norm2_;
  FeedForward ffn_;
};

// CMF on the token grid, then the transformer block. Registered as
// block<i>.cmf.*, block<i>.norm1.*, block<i>.attn.*, block<i>.norm2.*, block<i>.ffn.*.
class MvitCmfBlock : public Module {
 public:
  MvitCmfBlock(const ModelConfig& config, Rng& rng);

  Tensor forward(const Tensor& tokens) const;

  CmfBlock& cmf() { return cmf_; }
  MvitBlock& mvit() { return mvit_; }

 private:
  std::size_t grid_;
  CmfBlock cmf_;
  MvitBlock mvit_;
};

// Fully connected classifier: [hidden FC + ReLU] then the output FC.
class ClassifierHead : public Module {
 public:
  ClassifierHead(std::size_t in_features, std::size_t hidden, std::size_t classes, Rng& rng);

  Tensor forward(const Tensor& features) const;
  Linear& output_layer() { return *out_; }

 private:
  std::unique_ptr<Linear> hidden_;
  std::unique_ptr<Linear> out_;
};

class Model : public Module {
 public:
  explicit Model(ModelConfig config);

  const ModelConfig& config() const { return config_; }

  // Raw class scores [N, num_classes]; the loss consumes these.
  virtual Tensor logits(const Tensor& images, Mode mode) = 0;
  // Class probabilities: softmax over the logits.
  Tensor forward(const Tensor& images, Mode mode);

 protected:
  void check_input(const Tensor& images) const;

 private:
  ModelConfig config_;
};

// Patch embedding, learned positional table, stacked MViT+CMF blocks and
// global average pooling. Shared by both transformer models.
class CmvitBackbone : public Module {
 public:
  CmvitBackbone(const ModelConfig& config, Rng& rng);

  Tensor features(const Tensor& images) const;  // [N, embed_dim]

  Tensor positional_table() const { return table_; }
  MvitCmfBlock& block(std::size_t i) { return *blocks_.at(i); }
  std::size_t block_count() const { return blocks_.size(); }

 private:
  std::size_t grid_;
  PatchEmbed patch_embed_;
  Tensor table_;
  std::vector<std::unique_ptr<MvitCmfBlock>> blocks_;
};

class CmvitModel : public Model {
 public:
  CmvitModel(const ModelConfig& config, Rng& rng);

  Tensor logits(const Tensor& images, Mode mode) override;

  CmvitBackbone& backbone() { return backbone_; }
  ClassifierHead& head() { return head_; }

 private:
  CmvitBackbone backbone_;
  ClassifierHead head_;
};

// Per-image normalised 256-bin LBP histograms of the luminance of images in
// [0,1]; pixels are requantised with round(v * 255). Returns [N, 256].
Tensor lbp_histograms(const Tensor& images, const LbpConfig& config);

// Backbone as in CmvitModel; the embedded LBP histogram joins the pooled
// features at the head (late fusion).
class CmvitLbpModel : public Model {
 public:
  CmvitLbpModel(const ModelConfig& config, Rng& rng);

  Tensor logits(const Tensor& images, Mode mode) override;
  // The LBP branch output [N, lbp_embed_dim].
  Tensor lbp_branch(const Tensor& images) const;

  CmvitBackbone& backbone() { return backbone_; }
  Linear& lbp_embedding() { return lbp_embed_; }
  ClassifierHead& head() { return head_; }

 private:
  CmvitBackbone backbone_;
  Linear lbp_embed_;
  ClassifierHead head_;
};

// Middle-flow unit: three (separable conv, batch norm, ReLU) stages with an
// additive skip around the triple.
class XceptionMiddleBlock : public Module {
 public:
  XceptionMiddleBlock(std::size_t channels, Rng& rng);

  Tensor forward(const Tensor& x, Mode mode);
  DepthwiseSeparable& separable(std::size_t i) { return *seps_.at(i); }

 private:
  std::vector<std::unique_ptr<DepthwiseSeparable>> seps_;
  std::vector<std::unique_ptr<BatchNorm>> norms_;
};

class XceptionModel : public Model {
 public:
  XceptionModel(const ModelConfig& config, Rng& rng);

  Tensor logits(const Tensor& images, Mode mode) override;
  XceptionMiddleBlock& middle(std::size_t i) { return *middle_.at(i); }
  Linear& fc() { return fc_; }

 private:
  Conv2d conv1_;
  BatchNorm bn1_;
  Conv2d conv2_;
  BatchNorm bn2_;
  std::vector<std::unique_ptr<XceptionMiddleBlock>> middle_;
  DepthwiseSeparable exit_sep_;
  BatchNorm exit_bn_;
  Linear fc_;
};

// Validates the config and builds the architecture it names.
std::unique_ptr<Model> make_model(const ModelConfig& config, std::uint64_t seed);

// Checkpoint layout (little-endian):
//   "CMVK" | u32 version | u32 length + canonical [model] INI text |
//   u32 record count | per record: u32 name length, name, u32 rank,
//   u32 extents..., f64 values
// Records cover parameters followed by buffers (batch-norm statistics).
constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Model& model);
std::unique_ptr<Model> decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const Model& model, const std::filesystem::path& path);
std::unique_ptr<Model> load_checkpoint(const std::filesystem::path& path);

// Copies parameter and buffer values between two models of identical layout.
void copy_state(const Model& from, Model& to);

}  // namespace DFD_PRECISION_NS
}  // namespace dfd
