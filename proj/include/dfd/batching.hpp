#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dfd/dataset.hpp"
#include "dfd/tensor.hpp"

namespace dfd {
inline namespace DFD_PRECISION_NS {

// Channel-first [3,H,W] tensor of pixel / 255.
Tensor normalize(const RgbImage& image);

// Stacks normalised images into [N,3,H,W]; every image must be size x size.
Tensor stack_images(std::span<const Sample* const> samples, std::size_t size);

struct Batch {
  Tensor images;  // [B,3,S,S]
  std::vector<int> labels;
  std::vector<std::size_t> indices;  // positions in the sample list
};

// One epoch over a sample list in the order shuffled by seed ^ epoch. The
// final batch may be short. Samples must outlive the iterator.
class BatchIterator {
 public:
  BatchIterator(std::span<const Sample> samples, std::size_t batch_size, std::size_t image_size,
                std::uint64_t shuffle_seed, std::uint64_t epoch);
  // Unshuffled, in sample order (evaluation).
  BatchIterator(std::span<const Sample> samples, std::size_t batch_size, std::size_t image_size);

  std::optional<Batch> next();
  const std::vector<std::size_t>& order() const { return order_; }
  std::size_t batch_count() const;

 private:
  std::span<const Sample> samples_;
  std::size_t batch_size_;
  std::size_t image_size_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

}  // namespace DFD_PRECISION_NS
}  // namespace dfd
