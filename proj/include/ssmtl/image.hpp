#ifndef SSMTL_IMAGE_HPP
#define SSMTL_IMAGE_HPP

#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "ssmtl/core.hpp"

namespace ssmtl {

/// Single-channel image with intensities in [0, 1], row-major.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(int h, int w, double fill = 0.0)
      : height(h), width(w), pixels(static_cast<std::size_t>(h) * w, fill) {}

  double& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  double at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

  bool operator==(const Image&) const = default;
};

inline double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

inline std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(clamp01(v) * 255.0));
}

/// Binary (P5) 8-bit PGM encoding.
inline std::string encode_pgm(const Image& img) {
  std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.reserve(out.size() + img.pixels.size());
  for (double v : img.pixels) out.push_back(static_cast<char>(to_byte(v)));
  return out;
}

inline Image decode_pgm(const std::string& bytes, const std::string& name = "image") {
  std::size_t pos = 0;
  auto next_token = [&]() -> std::string {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return bytes.substr(start, pos - start);
  };
  if (next_token() != "P5") throw DataError(name + ": not a binary PGM (P5)");
  int w = 0, h = 0, maxval = 0;
  if (!parse_number(next_token(), w) || !parse_number(next_token(), h) ||
      !parse_number(next_token(), maxval) || w <= 0 || h <= 0)
    throw DataError(name + ": malformed PGM header");
  if (maxval != 255) throw DataError(name + ": only 8-bit PGM (maxval 255) is supported");
  ++pos;  // single whitespace byte after maxval
  const std::size_t n = static_cast<std::size_t>(w) * h;
  if (bytes.size() < pos + n) throw DataError(name + ": truncated PGM payload");
  Image img(h, w);
  for (std::size_t i = 0; i < n; ++i)
    img.pixels[i] = static_cast<unsigned char>(bytes[pos + i]) / 255.0;
  return img;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing " + path.string());
}

inline Image load_pgm(const std::filesystem::path& path) {
  return decode_pgm(read_file(path), path.string());
}

}  // namespace ssmtl

#endif  // SSMTL_IMAGE_HPP
