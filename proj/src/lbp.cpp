#include "dfd/lbp.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

namespace dfd {

namespace {

struct Offset {
  int dy, dx;
};

// Top-left first, then clockwise.
constexpr std::array<Offset, 8> kRing{{{-1, -1}, {-1, 0}, {-1, 1}, {0, 1},
                                       {1, 1},   {1, 0},  {1, -1}, {0, -1}}};

std::size_t clamp_index(std::ptrdiff_t v, std::size_t extent) {
  return static_cast<std::size_t>(
      std::clamp<std::ptrdiff_t>(v, 0, static_cast<std::ptrdiff_t>(extent) - 1));
}

unsigned code_unchecked(const GrayImage& image, std::size_t x, std::size_t y, int radius) {
  const std::uint8_t centre = image.at(y, x);
  unsigned code = 0;
  for (std::size_t bit = 0; bit < kRing.size(); ++bit) {
    const auto ny = clamp_index(static_cast<std::ptrdiff_t>(y) + kRing[bit].dy * radius, image.height);
    const auto nx = clamp_index(static_cast<std::ptrdiff_t>(x) + kRing[bit].dx * radius, image.width);
    if (image.at(ny, nx) >= centre) code |= 1u << bit;
  }
  return code;
}

}  // namespace

void LbpConfig::validate() const {
  if (neighbors != 8) {
    throw ContractError("only 8-neighbour LBP is supported, got " + std::to_string(neighbors));
  }
  if (radius < 1) throw ContractError("LBP radius must be >= 1, got " + std::to_string(radius));
}

std::uint8_t luminance(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  const double y = 0.299 * r + 0.587 * g + 0.114 * b;
  return static_cast<std::uint8_t>(std::clamp(std::lround(y), 0L, 255L));
}

GrayImage to_gray(const RgbImage& image) {
  GrayImage out{image.height, image.width, {}};
  out.values.resize(image.height * image.width);
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] = luminance(image.pixels[3 * i], image.pixels[3 * i + 1], image.pixels[3 * i + 2]);
  }
  return out;
}

unsigned lbp_code_at(const GrayImage& image, std::size_t x, std::size_t y, const LbpConfig& config) {
  config.validate();
  if (x >= image.width || y >= image.height) {
    throw ContractError("LBP coordinate (" + std::to_string(x) + "," + std::to_string(y) +
                        ") outside " + std::to_string(image.width) + "x" +
                        std::to_string(image.height) + " image");
  }
  return code_unchecked(image, x, y, config.radius);
}

CodePlane lbp_map(const GrayImage& image, const LbpConfig& config) {
  config.validate();
  CodePlane plane{image.height, image.width, {}};
  plane.codes.resize(image.height * image.width);
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      plane.codes[y * image.width + x] =
          static_cast<std::uint8_t>(code_unchecked(image, x, y, config.radius));
    }
  }
  return plane;
}

std::vector<double> lbp_histogram(const CodePlane& plane, bool normalize) {
  std::vector<double> bins(kLbpBins, 0.0);
  for (auto c : plane.codes) bins[c] += 1.0;
  if (normalize && !plane.codes.empty()) {
    const double n = static_cast<double>(plane.codes.size());
    for (auto& b : bins) b /= n;
  }
  return bins;
}

GrayImage code_plane_image(const CodePlane& plane) {
  return GrayImage{plane.height, plane.width, plane.codes};
}

}  // namespace dfd
