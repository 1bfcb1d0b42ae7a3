#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "dfd/image.hpp"

namespace dfd {

// Classic 8-neighbour LBP. Bit i is set iff neighbour i >= centre; neighbour 0
// is the top-left one and the rest follow clockwise. Out-of-image neighbours
// replicate the nearest border pixel.
struct LbpConfig {
  int radius = 1;
  int neighbors = 8;  // only 8 is supported

  void validate() const;
  bool operator==(const LbpConfig&) const = default;
};

constexpr std::size_t kLbpBins = 256;

struct CodePlane {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> codes;

  std::uint8_t at(std::size_t y, std::size_t x) const { return codes[y * width + x]; }
};

// round(0.299 R + 0.587 G + 0.114 B), clamped to [0, 255].
std::uint8_t luminance(std::uint8_t r, std::uint8_t g, std::uint8_t b);
GrayImage to_gray(const RgbImage& image);

// x is the column and y the row. Throws ContractError outside the image.
unsigned lbp_code_at(const GrayImage& image, std::size_t x, std::size_t y,
                     const LbpConfig& config = {});

CodePlane lbp_map(const GrayImage& image, const LbpConfig& config = {});

// 256 bins; with normalize, divided by the pixel count so the bins sum to 1.
std::vector<double> lbp_histogram(const CodePlane& plane, bool normalize);

// Code plane as an 8-bit grey image (codes map directly to intensities).
GrayImage code_plane_image(const CodePlane& plane);

}  // namespace dfd
