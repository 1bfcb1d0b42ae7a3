#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dfd/image.hpp"

namespace dfd {

constexpr int kLabelReal = 0;
constexpr int kLabelFake = 1;

struct Sample {
  RgbImage image;
  int label = 0;
  std::string source_id;
};

struct ManifestEntry {
  std::string path;  // relative to the manifest's base directory
  int label = 0;

  bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
  std::filesystem::path base_dir;
  std::vector<ManifestEntry> entries;
  // Human-readable record of how the entry list was derived (seeds, counts).
  std::vector<std::string> provenance;

  std::filesystem::path resolve(const ManifestEntry& entry) const { return base_dir / entry.path; }
};

// Per-class sample counts; labels outside [0, num_classes) throw ContractError.
std::vector<std::size_t> class_counts(std::span<const int> labels, std::size_t num_classes);
std::vector<std::size_t> class_counts(const DatasetManifest& manifest, std::size_t num_classes);

// CSV with header "path,label"; paths are relative to the file's directory.
DatasetManifest read_manifest(const std::filesystem::path& csv);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& csv);

// <root>/real/*.ppm (label 0) and <root>/fake/*.ppm (label 1), each sorted by name.
DatasetManifest discover_dataset(const std::filesystem::path& root);

// Indices kept when every class is undersampled, without replacement, to the
// minority count. Returned in ascending (original) order.
std::vector<std::size_t> balance_indices(std::span<const int> labels, std::uint64_t seed,
                                         std::size_t num_classes = 2);
DatasetManifest balance_undersample(const DatasetManifest& manifest, std::uint64_t seed,
                                    std::size_t num_classes = 2);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

// Stratified: each class sends round(n_c * val_fraction) of its samples,
// chosen by a seeded shuffle, to validation. Both lists stay in original order.
SplitIndices split_indices(std::span<const int> labels, double val_fraction, std::uint64_t seed,
                           std::size_t num_classes = 2);
std::pair<DatasetManifest, DatasetManifest> split(const DatasetManifest& manifest,
                                                  double val_fraction, std::uint64_t seed,
                                                  std::size_t num_classes = 2);

// Decodes every entry; source_id is the entry path.
std::vector<Sample> load_samples(const DatasetManifest& manifest);

// Synthetic two-class corpus. Class 0: smooth low-frequency colour gradients
// with mild noise. Class 1: the same kind of background overlaid with a
// high-frequency stripe or checkerboard texture (period 2-4 px).
RgbImage synthetic_image(int label, std::size_t size, std::uint64_t seed);
std::vector<Sample> synthetic_samples(std::size_t n_per_class, std::size_t size,
                                      std::uint64_t seed);

// Writes <out>/real/*.ppm, <out>/fake/*.ppm and <out>/manifest.csv.
DatasetManifest gen_synthetic(const std::filesystem::path& out, std::size_t n_per_class,
                              std::size_t size, std::uint64_t seed);

}  // namespace dfd
