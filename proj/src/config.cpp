#include "dfd/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace dfd {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::string where(std::string_view section, std::string_view key) {
  return std::string(section) + "." + std::string(key);
}

std::size_t to_count(std::string_view section, std::string_view key, std::string_view value) {
  std::size_t out = 0;
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ParseError(where(section, key) + ": expected a non-negative integer, got '" +
                     std::string(value) + "'");
  }
  return out;
}

std::uint64_t to_u64(std::string_view section, std::string_view key, std::string_view value) {
  std::uint64_t out = 0;
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ParseError(where(section, key) + ": expected an unsigned integer, got '" +
                     std::string(value) + "'");
  }
  return out;
}

double to_double(std::string_view section, std::string_view key, std::string_view value) {
  const std::string text(value);
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || text.empty()) {
    throw ParseError(where(section, key) + ": expected a number, got '" + text + "'");
  }
  return out;
}

bool to_bool(std::string_view section, std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ParseError(where(section, key) + ": expected true/false, got '" + std::string(value) + "'");
}

// Shortest round-trip representation for doubles.
std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

void set_model_key(ModelConfig& m, std::string_view key, std::string_view value) {
  constexpr std::string_view s = "model";
  if (key == "arch") {
    m.arch = parse_arch(value);
  } else if (key == "image_size") {
    m.image_size = to_count(s, key, value);
  } else if (key == "patch_size") {
    m.patch_size = to_count(s, key, value);
  } else if (key == "embed_dim") {
    m.embed_dim = to_count(s, key, value);
  } else if (key == "num_heads") {
    m.num_heads = to_count(s, key, value);
  } else if (key == "num_blocks") {
    m.num_blocks = to_count(s, key, value);
  } else if (key == "mlp_ratio") {
    m.mlp_ratio = to_count(s, key, value);
  } else if (key == "cmf_channels") {
    m.cmf_channels = to_count(s, key, value);
  } else if (key == "cmf_conv_layers") {
    m.cmf_conv_layers = to_count(s, key, value);
  } else if (key == "head_hidden") {
    m.head_hidden = to_count(s, key, value);
  } else if (key == "lbp_radius") {
    m.lbp.radius = static_cast<int>(to_count(s, key, value));
  } else if (key == "lbp_neighbors") {
    m.lbp.neighbors = static_cast<int>(to_count(s, key, value));
  } else if (key == "lbp_embed_dim") {
    m.lbp_embed_dim = to_count(s, key, value);
  } else if (key == "xception_width") {
    m.xception_width = to_count(s, key, value);
  } else if (key == "xception_middle_blocks") {
    m.xception_middle_blocks = to_count(s, key, value);
  } else if (key == "num_classes") {
    m.num_classes = to_count(s, key, value);
  } else {
    throw ParseError("unknown key model." + std::string(key));
  }
}

void set_train_key(TrainConfig& t, std::string_view key, std::string_view value) {
  constexpr std::string_view s = "train";
  if (key == "epochs") {
    t.epochs_max = to_count(s, key, value);
  } else if (key == "batch_size") {
    t.batch_size = to_count(s, key, value);
  } else if (key == "patience") {
    t.patience = to_count(s, key, value);
  } else if (key == "min_delta") {
    t.min_delta = to_double(s, key, value);
  } else if (key == "lr") {
    t.lr = to_double(s, key, value);
  } else if (key == "init_seed") {
    t.init_seed = to_u64(s, key, value);
  } else if (key == "data_seed") {
    t.data_seed = to_u64(s, key, value);
  } else if (key == "checkpoint") {
    t.checkpoint_path = std::string(value);
  } else {
    throw ParseError("unknown key train." + std::string(key));
  }
}

void set_data_key(DataConfig& d, std::string_view key, std::string_view value) {
  constexpr std::string_view s = "data";
  if (key == "root") {
    d.root = std::string(value);
  } else if (key == "manifest") {
    d.manifest = std::string(value);
  } else if (key == "val_fraction") {
    d.val_fraction = to_double(s, key, value);
  } else if (key == "seed") {
    d.seed = to_u64(s, key, value);
  } else if (key == "balance") {
    d.balance = to_bool(s, key, value);
  } else {
    throw ParseError("unknown key data." + std::string(key));
  }
}

}  // namespace

IniDocument IniDocument::parse(std::string_view text) {
  IniDocument doc;
  std::string current;
  bool in_section = false;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError("line " + std::to_string(line_no) + ": bad section header");
      current = trim(std::string_view(line).substr(1, line.size() - 2));
      if (current.empty()) throw ParseError("line " + std::to_string(line_no) + ": empty section name");
      doc.sections_[current];
      in_section = true;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError("line " + std::to_string(line_no) + ": expected key = value");
    }
    if (!in_section) throw ParseError("line " + std::to_string(line_no) + ": key outside a section");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) throw ParseError("line " + std::to_string(line_no) + ": empty key");
    auto& section = doc.sections_[current];
    if (section.count(key)) {
      throw ParseError("line " + std::to_string(line_no) + ": duplicate key " + current + "." + key);
    }
    section[key] = value;
  }
  return doc;
}

IniDocument IniDocument::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse(buf.str());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void IniDocument::set(const std::string& section, const std::string& key, const std::string& value) {
  sections_[section][key] = value;
}

std::string arch_name(Arch arch) {
  switch (arch) {
    case Arch::kCmvit: return "cmvit";
    case Arch::kCmvitLbp: return "cmvit_lbp";
    case Arch::kXception: return "xception";
  }
  return "unknown";
}

Arch parse_arch(std::string_view name) {
  if (name == "cmvit") return Arch::kCmvit;
  if (name == "cmvit_lbp") return Arch::kCmvitLbp;
  if (name == "xception") return Arch::kXception;
  throw ParseError("unknown arch '" + std::string(name) + "' (cmvit, cmvit_lbp, xception)");
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw ContractError("model config: " + m); };
  if (num_classes < 2) fail("num_classes must be >= 2");
  if (image_size == 0) fail("image_size must be positive");
  if (arch == Arch::kXception) {
    if (xception_width < 2 || xception_width % 2 != 0) fail("xception_width must be even and >= 2");
    return;
  }
  if (patch_size == 0 || image_size % patch_size != 0) fail("image_size must be divisible by patch_size");
  if (num_heads == 0 || embed_dim % num_heads != 0) fail("embed_dim must be divisible by num_heads");
  if (num_blocks == 0) fail("num_blocks must be >= 1");
  if (mlp_ratio == 0) fail("mlp_ratio must be >= 1");
  if (cmf_channels == 0 || cmf_conv_layers == 0) fail("cmf_channels and cmf_conv_layers must be >= 1");
  if (arch == Arch::kCmvitLbp) {
    lbp.validate();
    if (lbp_embed_dim == 0) fail("lbp_embed_dim must be >= 1");
  }
}

void TrainConfig::validate() const {
  if (patience < 1) throw ContractError("train config: patience must be >= 1");
  if (!(min_delta >= 0)) throw ContractError("train config: min_delta must be >= 0");
  if (batch_size == 0) throw ContractError("train config: batch_size must be >= 1");
  if (!(lr > 0)) throw ContractError("train config: lr must be positive");
}

void DataConfig::validate() const {
  if (!(val_fraction > 0 && val_fraction < 1)) {
    throw ContractError("data config: val_fraction must lie in (0, 1)");
  }
}

void set_config_key(RunConfig& config, std::string_view section, std::string_view key,
                    std::string_view value) {
  if (section == "model") {
    set_model_key(config.model, key, value);
  } else if (section == "train") {
    set_train_key(config.train, key, value);
  } else if (section == "data") {
    set_data_key(config.data, key, value);
  } else {
    throw ParseError("unknown section [" + std::string(section) + "]");
  }
}

RunConfig run_config_from_ini(const IniDocument& doc) {
  RunConfig config;
  for (const auto& [section, entries] : doc.sections()) {
    for (const auto& [key, value] : entries) set_config_key(config, section, key, value);
    if (entries.empty() && section != "model" && section != "train" && section != "data") {
      throw ParseError("unknown section [" + section + "]");
    }
  }
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  try {
    return run_config_from_ini(IniDocument::load(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void apply_override(RunConfig& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string_view::npos || dot == std::string_view::npos || dot > eq) {
    throw ParseError("override '" + std::string(assignment) + "' is not section.key=value");
  }
  set_config_key(config, trim(assignment.substr(0, dot)), trim(assignment.substr(dot + 1, eq - dot - 1)),
                 trim(assignment.substr(eq + 1)));
}

std::string model_config_to_ini(const ModelConfig& m) {
  std::ostringstream os;
  os << "[model]\n"
     << "arch = " << arch_name(m.arch) << "\n"
     << "image_size = " << m.image_size << "\n"
     << "patch_size = " << m.patch_size << "\n"
     << "embed_dim = " << m.embed_dim << "\n"
     << "num_heads = " << m.num_heads << "\n"
     << "num_blocks = " << m.num_blocks << "\n"
     << "mlp_ratio = " << m.mlp_ratio << "\n"
     << "cmf_channels = " << m.cmf_channels << "\n"
     << "cmf_conv_layers = " << m.cmf_conv_layers << "\n"
     << "head_hidden = " << m.head_hidden << "\n"
     << "lbp_radius = " << m.lbp.radius << "\n"
     << "lbp_neighbors = " << m.lbp.neighbors << "\n"
     << "lbp_embed_dim = " << m.lbp_embed_dim << "\n"
     << "xception_width = " << m.xception_width << "\n"
     << "xception_middle_blocks = " << m.xception_middle_blocks << "\n"
     << "num_classes = " << m.num_classes << "\n";
  return os.str();
}

ModelConfig model_config_from_ini(std::string_view text) {
  const IniDocument doc = IniDocument::parse(text);
  ModelConfig m;
  for (const auto& [section, entries] : doc.sections()) {
    if (section != "model") throw ParseError("unexpected section [" + section + "] in model config");
    for (const auto& [key, value] : entries) set_model_key(m, key, value);
  }
  return m;
}

std::string run_config_to_ini(const RunConfig& c) {
  std::ostringstream os;
  os << model_config_to_ini(c.model) << "\n[train]\n"
     << "epochs = " << c.train.epochs_max << "\n"
     << "batch_size = " << c.train.batch_size << "\n"
     << "patience = " << c.train.patience << "\n"
     << "min_delta = " << format_double(c.train.min_delta) << "\n"
     << "lr = " << format_double(c.train.lr) << "\n"
     << "init_seed = " << c.train.init_seed << "\n"
     << "data_seed = " << c.train.data_seed << "\n";
  if (!c.train.checkpoint_path.empty()) os << "checkpoint = " << c.train.checkpoint_path << "\n";
  os << "\n[data]\n";
  if (!c.data.root.empty()) os << "root = " << c.data.root << "\n";
  if (!c.data.manifest.empty()) os << "manifest = " << c.data.manifest << "\n";
  os << "val_fraction = " << format_double(c.data.val_fraction) << "\n"
     << "seed = " << c.data.seed << "\n"
     << "balance = " << (c.data.balance ? "true" : "false") << "\n";
  return os.str();
}

}  // namespace dfd
