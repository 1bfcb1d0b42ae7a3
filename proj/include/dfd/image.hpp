#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "dfd/core.hpp"

// 8-bit raster images and the binary netpbm formats (P6 colour, P5 grey).
namespace dfd {

struct RgbImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;  // row-major, RGB interleaved

  std::uint8_t at(std::size_t y, std::size_t x, std::size_t channel) const {
    return pixels[(y * width + x) * 3 + channel];
  }
};

struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> values;  // row-major

  std::uint8_t at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
};

// Strict P6 decoder: maxval must be 255 and the payload complete.
RgbImage decode_ppm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_ppm(const RgbImage& image);

GrayImage decode_pgm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_pgm(const GrayImage& image);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

RgbImage load_ppm(const std::filesystem::path& path);
void save_ppm(const RgbImage& image, const std::filesystem::path& path);
void save_pgm(const GrayImage& image, const std::filesystem::path& path);

// Reads either a P6 or a P5 file; P5 input is replicated into three channels.
RgbImage load_any_netpbm(const std::filesystem::path& path);

}  // namespace dfd
