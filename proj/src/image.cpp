#include "dfd/image.hpp"

#include <cctype>
#include <fstream>
#include <string>

namespace dfd {

namespace {

struct Header {
  std::string magic;
  std::size_t width = 0, height = 0, maxval = 0;
  std::size_t payload_offset = 0;
};

// Parses "<magic> <w> <h> <maxval>" with '#' comments, then one whitespace byte.
Header parse_header(std::span<const std::uint8_t> bytes) {
  Header h;
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_token = [&]() -> std::string {
    skip_space();
    std::string tok;
    while (pos < bytes.size() && !std::isspace(bytes[pos]) && bytes[pos] != '#') {
      tok.push_back(static_cast<char>(bytes[pos++]));
    }
    if (tok.empty()) throw ParseError("truncated netpbm header");
    return tok;
  };
  auto read_number = [&]() -> std::size_t {
    const std::string tok = read_token();
    for (char c : tok) {
      if (!std::isdigit(static_cast<unsigned char>(c))) {
        throw ParseError("bad number '" + tok + "' in netpbm header");
      }
    }
    if (tok.size() > 9) throw ParseError("netpbm dimension too large: " + tok);
    return std::stoul(tok);
  };
  if (bytes.size() < 2) throw ParseError("file too short for a netpbm header");
  h.magic = std::string{static_cast<char>(bytes[0]), static_cast<char>(bytes[1])};
  pos = 2;
  h.width = read_number();
  h.height = read_number();
  h.maxval = read_number();
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) {
    throw ParseError("missing separator after netpbm header");
  }
  h.payload_offset = pos + 1;
  return h;
}

std::vector<std::uint8_t> header_bytes(const char* magic, std::size_t w, std::size_t h) {
  const std::string text =
      std::string(magic) + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  return {text.begin(), text.end()};
}

}  // namespace

RgbImage decode_ppm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') {
    throw ParseError("not a binary PPM (expected magic P6)");
  }
  const Header h = parse_header(bytes);
  if (h.maxval != 255) throw ParseError("PPM maxval must be 255, got " + std::to_string(h.maxval));
  const std::size_t need = h.width * h.height * 3;
  if (bytes.size() - h.payload_offset < need) {
    throw ParseError("PPM payload truncated: need " + std::to_string(need) + " bytes, have " +
                     std::to_string(bytes.size() - h.payload_offset));
  }
  RgbImage img;
  img.width = h.width;
  img.height = h.height;
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(h.payload_offset),
                    bytes.begin() + static_cast<std::ptrdiff_t>(h.payload_offset + need));
  return img;
}

std::vector<std::uint8_t> encode_ppm(const RgbImage& image) {
  auto out = header_bytes("P6", image.width, image.height);
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

GrayImage decode_pgm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    throw ParseError("not a binary PGM (expected magic P5)");
  }
  const Header h = parse_header(bytes);
  if (h.maxval != 255) throw ParseError("PGM maxval must be 255, got " + std::to_string(h.maxval));
  const std::size_t need = h.width * h.height;
  if (bytes.size() - h.payload_offset < need) throw ParseError("PGM payload truncated");
  GrayImage img;
  img.width = h.width;
  img.height = h.height;
  img.values.assign(bytes.begin() + static_cast<std::ptrdiff_t>(h.payload_offset),
                    bytes.begin() + static_cast<std::ptrdiff_t>(h.payload_offset + need));
  return img;
}

std::vector<std::uint8_t> encode_pgm(const GrayImage& image) {
  auto out = header_bytes("P5", image.width, image.height);
  out.insert(out.end(), image.values.begin(), image.values.end());
  return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

RgbImage load_ppm(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_ppm(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void save_ppm(const RgbImage& image, const std::filesystem::path& path) {
  write_file(path, encode_ppm(image));
}

void save_pgm(const GrayImage& image, const std::filesystem::path& path) {
  write_file(path, encode_pgm(image));
}

RgbImage load_any_netpbm(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') {
    const GrayImage g = decode_pgm(bytes);
    RgbImage img{g.height, g.width, {}};
    img.pixels.reserve(g.values.size() * 3);
    for (auto v : g.values) img.pixels.insert(img.pixels.end(), {v, v, v});
    return img;
  }
  return decode_ppm(bytes);
}

}  // namespace dfd
