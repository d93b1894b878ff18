#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "recal/common.hpp"

namespace recal {

/// 8-bit raster, row-major, channels interleaved. channels is 1 (gray) or 3
/// (RGB).
struct ImageU8 {
  int64_t height = 0;
  int64_t width = 0;
  int64_t channels = 0;
  std::vector<uint8_t> pixels;

  uint8_t& at(int64_t y, int64_t x, int64_t c) {
    return pixels[static_cast<size_t>((y * width + x) * channels + c)];
  }
  uint8_t at(int64_t y, int64_t x, int64_t c) const {
    return pixels[static_cast<size_t>((y * width + x) * channels + c)];
  }
};

void write_png(const std::string& path, const ImageU8& img);

/// Reads an 8-bit grayscale or RGB PNG. Malformed input raises IoError with
/// the byte offset reached.
ImageU8 read_png(const std::string& path);

}  // namespace recal
