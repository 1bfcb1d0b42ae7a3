#include "dfd/batching.hpp"

#include <algorithm>
#include <numeric>

#include "dfd/rng.hpp"

namespace dfd {
inline namespace DFD_PRECISION_NS {
namespace {

void check_size(const Sample& sample, std::size_t size) {
  if (sample.image.height != size || sample.image.width != size) {
    throw ContractError("image '" + sample.source_id + "' is " +
                        std::to_string(sample.image.height) + "x" +
                        std::to_string(sample.image.width) + ", expected " + std::to_string(size) +
                        "x" + std::to_string(size));
  }
}

void write_planes(const RgbImage& image, Real* out) {
  const std::size_t plane = image.height * image.width;
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      out[c * plane + i] = static_cast<Real>(image.pixels[i * 3 + c]) / Real(255);
    }
  }
}

}  // namespace

Tensor normalize(const RgbImage& image) {
  std::vector<Real> values(3 * image.height * image.width);
  write_planes(image, values.data());
  return Tensor::from_values({3, image.height, image.width}, std::move(values));
}

Tensor stack_images(std::span<const Sample* const> samples, std::size_t size) {
  const std::size_t per = 3 * size * size;
  std::vector<Real> values(samples.size() * per);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    check_size(*samples[i], size);
    write_planes(samples[i]->image, values.data() + i * per);
  }
  return Tensor::from_values({samples.size(), 3, size, size}, std::move(values));
}

BatchIterator::BatchIterator(std::span<const Sample> samples, std::size_t batch_size,
                             std::size_t image_size)
    : samples_(samples), batch_size_(batch_size), image_size_(image_size), order_(samples.size()) {
  if (batch_size_ == 0) throw ContractError("batch size must be positive");
  for (const auto& s : samples_) check_size(s, image_size_);
  std::iota(order_.begin(), order_.end(), std::size_t{0});
}

BatchIterator::BatchIterator(std::span<const Sample> samples, std::size_t batch_size,
                             std::size_t image_size, std::uint64_t shuffle_seed,
                             std::uint64_t epoch)
    : BatchIterator(samples, batch_size, image_size) {
  Rng rng(shuffle_seed ^ epoch);
  rng.shuffle(order_);
}

std::size_t BatchIterator::batch_count() const {
  return (order_.size() + batch_size_ - 1) / batch_size_;
}

std::optional<Batch> BatchIterator::next() {
  if (cursor_ >= order_.size()) return std::nullopt;
  const std::size_t end = std::min(order_.size(), cursor_ + batch_size_);
  Batch batch;
  std::vector<const Sample*> members;
  for (std::size_t i = cursor_; i < end; ++i) {
    members.push_back(&samples_[order_[i]]);
    batch.labels.push_back(samples_[order_[i]].label);
    batch.indices.push_back(order_[i]);
  }
  batch.images = stack_images(members, image_size_);
  cursor_ = end;
  return batch;
}

}  // namespace DFD_PRECISION_NS
}  // namespace dfd
