#include "dfd/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include "dfd/rng.hpp"

namespace dfd {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<int> labels_of(const DatasetManifest& manifest) {
  std::vector<int> labels;
  labels.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) labels.push_back(e.label);
  return labels;
}

DatasetManifest select(const DatasetManifest& manifest, std::span<const std::size_t> indices) {
  DatasetManifest out{manifest.base_dir, {}, manifest.provenance};
  out.entries.reserve(indices.size());
  for (std::size_t i : indices) out.entries.push_back(manifest.entries[i]);
  return out;
}

std::string counts_str(std::span<const std::size_t> counts) {
  std::string s;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (c) s += '/';
    s += std::to_string(counts[c]);
  }
  return s;
}

std::vector<std::vector<std::size_t>> by_class(std::span<const int> labels,
                                               std::size_t num_classes) {
  class_counts(labels, num_classes);  // validates labels
  std::vector<std::vector<std::size_t>> groups(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    groups[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  return groups;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  // splitmix64 finaliser over a simple combination.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (a + 1) + 0xbf58476d1ce4e5b9ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string synthetic_name(int label, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%04zu.ppm", label == kLabelReal ? "real" : "fake", index);
  return std::string(label == kLabelReal ? "real/" : "fake/") + buf;
}

}  // namespace

std::vector<std::size_t> class_counts(std::span<const int> labels, std::size_t num_classes) {
  std::vector<std::size_t> counts(num_classes, 0);
  for (int label : labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= num_classes) {
      throw ContractError("label " + std::to_string(label) + " outside [0, " +
                          std::to_string(num_classes) + ")");
    }
    ++counts[static_cast<std::size_t>(label)];
  }
  return counts;
}

std::vector<std::size_t> class_counts(const DatasetManifest& manifest, std::size_t num_classes) {
  const auto labels = labels_of(manifest);
  return class_counts(labels, num_classes);
}

DatasetManifest read_manifest(const std::filesystem::path& csv) {
  const auto bytes = read_file(csv);
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  DatasetManifest manifest;
  manifest.base_dir = csv.parent_path();
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string text = trim(line);
    if (text.empty()) continue;
    if (!header) {
      if (text != "path,label") {
        throw ParseError(csv.string() + ": expected header 'path,label', got '" + text + "'");
      }
      header = true;
      continue;
    }
    const auto comma = text.rfind(',');
    if (comma == std::string::npos) {
      throw ParseError(csv.string() + ":" + std::to_string(line_no) + ": missing label column");
    }
    ManifestEntry entry{trim(std::string_view(text).substr(0, comma)), 0};
    const std::string label = trim(std::string_view(text).substr(comma + 1));
    const auto [ptr, ec] = std::from_chars(label.data(), label.data() + label.size(), entry.label);
    if (ec != std::errc() || ptr != label.data() + label.size() || entry.path.empty()) {
      throw ParseError(csv.string() + ":" + std::to_string(line_no) + ": bad row '" + text + "'");
    }
    manifest.entries.push_back(std::move(entry));
  }
  if (!header) throw ParseError(csv.string() + ": empty manifest");
  manifest.provenance.push_back("read " + csv.filename().string());
  return manifest;
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& csv) {
  const auto target_dir = std::filesystem::absolute(csv).parent_path().lexically_normal();
  std::string text = "path,label\n";
  for (const auto& e : manifest.entries) {
    const auto full = std::filesystem::absolute(manifest.resolve(e)).lexically_normal();
    const std::string rel = full.lexically_relative(target_dir).generic_string();
    if (rel.find(',') != std::string::npos) {
      throw ContractError("manifest path contains a comma: " + rel);
    }
    text += rel + "," + std::to_string(e.label) + "\n";
  }
  write_file(csv, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

DatasetManifest discover_dataset(const std::filesystem::path& root) {
  DatasetManifest manifest;
  manifest.base_dir = root;
  bool any_dir = false;
  for (const auto& [dir, label] : {std::pair{"real", kLabelReal}, std::pair{"fake", kLabelFake}}) {
    const auto path = root / dir;
    if (!std::filesystem::is_directory(path)) continue;
    any_dir = true;
    std::vector<std::string> names;
    for (const auto& item : std::filesystem::directory_iterator(path)) {
      if (item.is_regular_file() && item.path().extension() == ".ppm") {
        names.push_back(item.path().filename().string());
      }
    }
    std::sort(names.begin(), names.end());
    for (const auto& name : names) manifest.entries.push_back({std::string(dir) + "/" + name, label});
  }
  if (!any_dir) {
    throw IoError("no real/ or fake/ directory under " + root.string());
  }
  manifest.provenance.push_back("discovered " + root.string());
  return manifest;
}

std::vector<std::size_t> balance_indices(std::span<const int> labels, std::uint64_t seed,
                                         std::size_t num_classes) {
  auto groups = by_class(labels, num_classes);
  std::size_t target = labels.size();
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (groups[c].empty()) throw ContractError("class " + std::to_string(c) + " has no samples");
    target = std::min(target, groups[c].size());
  }
  Rng rng(seed);
  std::vector<std::size_t> kept;
  for (auto& group : groups) {
    // Partial Fisher-Yates: the first `target` slots become a uniform sample.
    for (std::size_t i = 0; i < target && group.size() > target; ++i) {
      std::swap(group[i], group[i + rng.below(group.size() - i)]);
    }
    kept.insert(kept.end(), group.begin(), group.begin() + static_cast<std::ptrdiff_t>(target));
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

DatasetManifest balance_undersample(const DatasetManifest& manifest, std::uint64_t seed,
                                    std::size_t num_classes) {
  const auto labels = labels_of(manifest);
  const auto before = class_counts(labels, num_classes);
  const auto kept = balance_indices(labels, seed, num_classes);
  DatasetManifest out = select(manifest, kept);
  out.provenance.push_back("balance_undersample seed=" + std::to_string(seed) + " counts " +
                           counts_str(before) + " -> " +
                           counts_str(class_counts(out, num_classes)));
  return out;
}

SplitIndices split_indices(std::span<const int> labels, double val_fraction, std::uint64_t seed,
                           std::size_t num_classes) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw ContractError("val_fraction must lie in (0, 1), got " + std::to_string(val_fraction));
  }
  auto groups = by_class(labels, num_classes);
  Rng rng(seed);
  SplitIndices out;
  for (auto& group : groups) {
    const auto n_val =
        static_cast<std::size_t>(std::llround(static_cast<double>(group.size()) * val_fraction));
    rng.shuffle(group);
    out.val.insert(out.val.end(), group.begin(), group.begin() + static_cast<std::ptrdiff_t>(n_val));
    out.train.insert(out.train.end(), group.begin() + static_cast<std::ptrdiff_t>(n_val),
                     group.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.val.begin(), out.val.end());
  return out;
}

std::pair<DatasetManifest, DatasetManifest> split(const DatasetManifest& manifest,
                                                  double val_fraction, std::uint64_t seed,
                                                  std::size_t num_classes) {
  const auto labels = labels_of(manifest);
  const auto parts = split_indices(labels, val_fraction, seed, num_classes);
  auto train = select(manifest, parts.train);
  auto val = select(manifest, parts.val);
  const std::string note = "split val_fraction=" + std::to_string(val_fraction) +
                           " seed=" + std::to_string(seed);
  train.provenance.push_back(note + " (train)");
  val.provenance.push_back(note + " (val)");
  return {std::move(train), std::move(val)};
}

std::vector<Sample> load_samples(const DatasetManifest& manifest) {
  std::vector<Sample> samples;
  samples.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) {
    try {
      samples.push_back({load_ppm(manifest.resolve(e)), e.label, e.path});
    } catch (const ParseError& err) {
      throw ParseError(e.path + ": " + err.what());
    }
  }
  return samples;
}

RgbImage synthetic_image(int label, std::size_t size, std::uint64_t seed) {
  if (size == 0 || (size & (size - 1)) != 0) {
    throw ContractError("synthetic image size must be a power of two, got " + std::to_string(size));
  }
  Rng rng(seed);
  const double n = static_cast<double>(size);
  // Background: per-channel planar gradient plus one slow sinusoid.
  double base[3], gx[3], gy[3], wave[3];
  for (int c = 0; c < 3; ++c) {
    base[c] = rng.uniform(60.0, 190.0);
    gx[c] = rng.uniform(-50.0, 50.0);
    gy[c] = rng.uniform(-50.0, 50.0);
    wave[c] = rng.uniform(0.0, 20.0);
  }
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double angle = rng.uniform(0.0, std::numbers::pi);
  const double noise_sigma = 3.0;

  int pattern = -1;
  std::size_t period = 2;
  double amplitude = 0.0, tint[3] = {1.0, 1.0, 1.0};
  if (label == kLabelFake) {
    pattern = static_cast<int>(rng.below(3));  // 0 rows, 1 columns, 2 checkerboard
    period = 2 + rng.below(3);
    amplitude = rng.uniform(40.0, 80.0);
    for (double& t : tint) t = rng.uniform(0.6, 1.0);
  } else if (label != kLabelReal) {
    throw ContractError("synthetic label must be 0 or 1");
  }

  RgbImage image{size, size, std::vector<std::uint8_t>(size * size * 3)};
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double u = static_cast<double>(x) / n, v = static_cast<double>(y) / n;
      const double slow =
          std::sin(2.0 * std::numbers::pi * (u * std::cos(angle) + v * std::sin(angle)) + phase);
      double texture = 0.0;
      if (pattern >= 0) {
        const bool ry = (y % period) * 2 < period;
        const bool rx = (x % period) * 2 < period;
        const bool on = pattern == 0 ? ry : pattern == 1 ? rx : (rx != ry);
        texture = (on ? 0.5 : -0.5) * amplitude;
      }
      for (int c = 0; c < 3; ++c) {
        const double value = base[c] + gx[c] * (u - 0.5) + gy[c] * (v - 0.5) + wave[c] * slow +
                             texture * tint[c] + noise_sigma * rng.normal();
        image.pixels[(y * size + x) * 3 + static_cast<std::size_t>(c)] =
            static_cast<std::uint8_t>(std::clamp(std::lround(value), 0L, 255L));
      }
    }
  }
  return image;
}

std::vector<Sample> synthetic_samples(std::size_t n_per_class, std::size_t size,
                                      std::uint64_t seed) {
  std::vector<Sample> samples;
  samples.reserve(2 * n_per_class);
  for (int label : {kLabelReal, kLabelFake}) {
    for (std::size_t i = 0; i < n_per_class; ++i) {
      samples.push_back({synthetic_image(label, size, mix_seed(seed, static_cast<std::uint64_t>(label), i)),
                         label, synthetic_name(label, i)});
    }
  }
  return samples;
}

DatasetManifest gen_synthetic(const std::filesystem::path& out, std::size_t n_per_class,
                              std::size_t size, std::uint64_t seed) {
  const auto samples = synthetic_samples(n_per_class, size, seed);
  std::error_code ec;
  for (const char* dir : {"real", "fake"}) {
    std::filesystem::create_directories(out / dir, ec);
    if (ec) throw IoError("cannot create " + (out / dir).string() + ": " + ec.message());
  }
  DatasetManifest manifest;
  manifest.base_dir = out;
  for (const auto& s : samples) {
    save_ppm(s.image, out / s.source_id);
    manifest.entries.push_back({s.source_id, s.label});
  }
  manifest.provenance.push_back("gen_synthetic n_per_class=" + std::to_string(n_per_class) +
                                " size=" + std::to_string(size) + " seed=" + std::to_string(seed));
  write_manifest(manifest, out / "manifest.csv");
  return manifest;
}

}  // namespace dfd
