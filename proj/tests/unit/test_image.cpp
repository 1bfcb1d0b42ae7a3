#include <doctest.h>

#include <filesystem>
#include <string>
#include <vector>

#include "dfd/image.hpp"

using namespace dfd;

namespace {

std::vector<std::uint8_t> bytes_of(const std::string& header, std::size_t payload) {
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (std::size_t i = 0; i < payload; ++i) out.push_back(static_cast<std::uint8_t>(i * 7));
  return out;
}

}  // namespace

TEST_CASE("load_ppm examples") {
  const RgbImage img = decode_ppm(bytes_of("P6 2 2 255\n", 12));
  CHECK(img.height == 2);
  CHECK(img.width == 2);
  CHECK(img.pixels.size() == 12);
  CHECK(img.at(0, 1, 0) == 21);
  CHECK(img.at(1, 1, 2) == 77);

  CHECK_THROWS_AS(decode_ppm(bytes_of("P5 2 2 255\n", 4)), ParseError);
  CHECK_THROWS_AS(decode_ppm(bytes_of("P6 2 2 255\n", 11)), ParseError);
  CHECK_THROWS_AS(decode_ppm(bytes_of("P6 2 2 65535\n", 24)), ParseError);
  CHECK_THROWS_AS(decode_ppm(bytes_of("P6 2", 0)), ParseError);
  CHECK_THROWS_AS(decode_ppm(bytes_of("P6 x 2 255\n", 12)), ParseError);
}

TEST_CASE("netpbm headers allow comments and arbitrary whitespace") {
  const RgbImage img = decode_ppm(bytes_of("P6\n# made by hand\n1\t1\n255\n", 3));
  CHECK(img.height == 1);
  CHECK(img.width == 1);
  CHECK(img.pixels == std::vector<std::uint8_t>{0, 7, 14});
}

TEST_CASE("ppm and pgm encode/decode round-trip") {
  RgbImage rgb{2, 3, {}};
  for (std::size_t i = 0; i < 18; ++i) rgb.pixels.push_back(static_cast<std::uint8_t>(i * 13));
  const RgbImage back = decode_ppm(encode_ppm(rgb));
  CHECK(back.height == 2);
  CHECK(back.width == 3);
  CHECK(back.pixels == rgb.pixels);

  const GrayImage gray{3, 2, {0, 10, 20, 30, 40, 255}};
  const GrayImage gback = decode_pgm(encode_pgm(gray));
  CHECK(gback.values == gray.values);
  CHECK_THROWS_AS(decode_pgm(encode_ppm(rgb)), ParseError);
}

TEST_CASE("files: save, load, and grey input replicated to three channels") {
  const auto dir = std::filesystem::temp_directory_path() / "dfd_test_image";
  std::filesystem::create_directories(dir);
  RgbImage rgb{1, 2, {1, 2, 3, 4, 5, 6}};
  save_ppm(rgb, dir / "a.ppm");
  CHECK(load_ppm(dir / "a.ppm").pixels == rgb.pixels);
  CHECK(load_any_netpbm(dir / "a.ppm").pixels == rgb.pixels);

  save_pgm(GrayImage{1, 2, {9, 200}}, dir / "g.pgm");
  const RgbImage widened = load_any_netpbm(dir / "g.pgm");
  CHECK(widened.pixels == std::vector<std::uint8_t>{9, 9, 9, 200, 200, 200});
  CHECK_THROWS_AS(load_ppm(dir / "g.pgm"), ParseError);
  CHECK_THROWS_AS(load_ppm(dir / "missing.ppm"), IoError);
  std::filesystem::remove_all(dir);
}
