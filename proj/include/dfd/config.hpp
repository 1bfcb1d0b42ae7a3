#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "dfd/lbp.hpp"

namespace dfd {

// Minimal INI reader: "[section]" headers, "key = value" lines, '#' or ';'
// comments. Keys outside a section and duplicate keys are errors.
class IniDocument {
 public:
  using Section = std::map<std::string, std::string>;

  static IniDocument parse(std::string_view text);
  static IniDocument load(const std::filesystem::path& path);

  const std::map<std::string, Section>& sections() const { return sections_; }
  void set(const std::string& section, const std::string& key, const std::string& value);

 private:
  std::map<std::string, Section> sections_;
};

enum class Arch { kCmvit, kCmvitLbp, kXception };

std::string arch_name(Arch arch);
Arch parse_arch(std::string_view name);

// Architecture hyperparameters. Keys and defaults (the [model] INI section):
//   arch                    cmvit | cmvit_lbp | xception
//   image_size              square input side in pixels
//   patch_size              patch-embedding kernel and stride
//   embed_dim, num_heads    token width and attention heads
//   num_blocks              stacked CMF + MViT blocks
//   mlp_ratio               FFN hidden width = mlp_ratio * embed_dim
//   cmf_channels            conv width of the frequency branch
//   cmf_conv_layers         3x3 convs in the frequency branch
//   head_hidden             hidden width of the transformer head (0 = single FC)
//   lbp_radius, lbp_neighbors, lbp_embed_dim
//   xception_width          entry width; the exit block doubles it
//   xception_middle_blocks  residual middle blocks
//   num_classes
struct ModelConfig {
  Arch arch = Arch::kCmvit;
  std::size_t image_size = 32;
  std::size_t patch_size = 8;
  std::size_t embed_dim = 32;
  std::size_t num_heads = 2;
  std::size_t num_blocks = 2;
  std::size_t mlp_ratio = 2;
  std::size_t cmf_channels = 16;
  std::size_t cmf_conv_layers = 2;
  std::size_t head_hidden = 32;
  LbpConfig lbp;
  std::size_t lbp_embed_dim = 16;
  std::size_t xception_width = 16;
  std::size_t xception_middle_blocks = 1;
  std::size_t num_classes = 2;

  std::size_t grid() const { return image_size / patch_size; }
  void validate() const;  // throws ContractError
  bool operator==(const ModelConfig&) const = default;
};

// Training constants; [train] INI section.
struct TrainConfig {
  std::size_t epochs_max = 30;
  std::size_t batch_size = 64;
  std::size_t patience = 5;
  double min_delta = 1e-4;
  double lr = 1e-3;
  std::uint64_t init_seed = 1;
  std::uint64_t data_seed = 1;
  std::string checkpoint_path;

  void validate() const;
};

// Dataset location and preparation; [data] INI section.
struct DataConfig {
  std::string root;      // <root>/real/*.ppm, <root>/fake/*.ppm
  std::string manifest;  // CSV "path,label"; takes precedence over root
  double val_fraction = 0.2;
  std::uint64_t seed = 7;
  bool balance = true;

  void validate() const;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
};

// Every key is validated; unknown sections or keys throw ParseError.
RunConfig run_config_from_ini(const IniDocument& doc);
RunConfig load_run_config(const std::filesystem::path& path);

// Applies one "section.key=value" assignment on top of an existing config.
void apply_override(RunConfig& config, std::string_view assignment);
void set_config_key(RunConfig& config, std::string_view section, std::string_view key,
                    std::string_view value);

// Canonical serialisation: fixed key order, one "key = value" per line.
std::string model_config_to_ini(const ModelConfig& config);
ModelConfig model_config_from_ini(std::string_view text);
std::string run_config_to_ini(const RunConfig& config);

}  // namespace dfd
