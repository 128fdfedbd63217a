#pragma once

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <vector>

#include "pansharp/tensor.hpp"

namespace pansharp {

namespace detail {

inline void png_be32(std::vector<std::uint8_t>& v, std::uint32_t x) {
  v.push_back(static_cast<std::uint8_t>(x >> 24));
  v.push_back(static_cast<std::uint8_t>(x >> 16));
  v.push_back(static_cast<std::uint8_t>(x >> 8));
  v.push_back(static_cast<std::uint8_t>(x));
}

inline void png_chunk(std::ofstream& f, const char type[4],
                      const std::vector<std::uint8_t>& data) {
  std::vector<std::uint8_t> hdr;
  png_be32(hdr, static_cast<std::uint32_t>(data.size()));
  f.write(reinterpret_cast<const char*>(hdr.data()), 4);
  std::vector<std::uint8_t> body(type, type + 4);
  body.insert(body.end(), data.begin(), data.end());
  f.write(reinterpret_cast<const char*>(body.data()),
          static_cast<std::streamsize>(body.size()));
  std::uint32_t crc = static_cast<std::uint32_t>(
      crc32(0L, body.data(), static_cast<uInt>(body.size())));
  std::vector<std::uint8_t> tail;
  png_be32(tail, crc);
  f.write(reinterpret_cast<const char*>(tail.data()), 4);
}

}  // namespace detail

// Minimal 8-bit RGB PNG writer (zlib-deflated, filter 0 scanlines).
inline void write_png_rgb8(const std::filesystem::path& path, int width, int height,
                           const std::vector<std::uint8_t>& rgb) {
  if (static_cast<long>(rgb.size()) != 3L * width * height)
    throw ContractViolation("png: pixel buffer size mismatch");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write png: " + path.string());
  static const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  f.write(reinterpret_cast<const char*>(sig), 8);

  std::vector<std::uint8_t> ihdr;
  detail::png_be32(ihdr, static_cast<std::uint32_t>(width));
  detail::png_be32(ihdr, static_cast<std::uint32_t>(height));
  ihdr.push_back(8);   // bit depth
  ihdr.push_back(2);   // RGB
  ihdr.push_back(0);   // compression
  ihdr.push_back(0);   // filter
  ihdr.push_back(0);   // no interlace
  detail::png_chunk(f, "IHDR", ihdr);

  std::vector<std::uint8_t> raw;
  raw.reserve(static_cast<std::size_t>(height) * (1 + 3L * width));
  for (int y = 0; y < height; ++y) {
    raw.push_back(0);  // filter none
    raw.insert(raw.end(), rgb.begin() + 3L * y * width, rgb.begin() + 3L * (y + 1) * width);
  }
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> idat(bound);
  if (compress2(idat.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK)
    throw IoError("png: deflate failed for " + path.string());
  idat.resize(bound);
  detail::png_chunk(f, "IDAT", idat);
  detail::png_chunk(f, "IEND", {});
  if (!f) throw IoError("png: write failed for " + path.string());
}

// Per-band 2-98 percentile stretch (nearest rank), then gamma 1/2.2.
// Degenerate bands (no range) render mid-gray.
template <typename T>
std::vector<std::uint8_t> stretch_bands_rgb8(const Tensor<T>& cube,
                                             const std::array<int, 3>& bands) {
  require_rank(cube, 3, "export_png");
  int c = cube.extent(0), h = cube.extent(1), w = cube.extent(2);
  for (int b : bands)
    if (b < 0 || b >= c)
      throw ContractViolation("export_png: band index " + std::to_string(b) +
                              " out of range for " + std::to_string(c) + " bands");
  long hw = static_cast<long>(h) * w;
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(3) * hw);
  for (int k = 0; k < 3; ++k) {
    const T* bp = cube.data() + static_cast<long>(bands[static_cast<std::size_t>(k)]) * hw;
    std::vector<double> sorted(bp, bp + hw);
    std::sort(sorted.begin(), sorted.end());
    double lo = sorted[static_cast<std::size_t>(std::lround(0.02 * (hw - 1)))];
    double hi = sorted[static_cast<std::size_t>(std::lround(0.98 * (hw - 1)))];
    for (long p = 0; p < hw; ++p) {
      double v;
      if (hi - lo <= 0) {
        v = 128.0;
      } else {
        double t = std::clamp((static_cast<double>(bp[p]) - lo) / (hi - lo), 0.0, 1.0);
        v = std::round(std::pow(t, 1.0 / 2.2) * 255.0);
      }
      rgb[static_cast<std::size_t>(3 * p + k)] = static_cast<std::uint8_t>(v);
    }
  }
  return rgb;
}

template <typename T>
void export_png(const Tensor<T>& cube, const std::array<int, 3>& bands,
                const std::filesystem::path& path) {
  auto rgb = stretch_bands_rgb8(cube, bands);
  write_png_rgb8(path, cube.extent(2), cube.extent(1), rgb);
}

}  // namespace pansharp
