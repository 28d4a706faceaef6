#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tba {

// 8-bit grayscale raster, row-major, maxval fixed at 255.
struct PgmImage {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> pixels;

  uint8_t at(int x, int y) const { return pixels[static_cast<size_t>(y) * width + x]; }
};

PgmImage load_pgm(const std::string& path);
void save_pgm(const PgmImage& img, const std::string& path);

// Writes bytes to path via a temp file plus rename so failed runs leave
// no partial output behind.
void atomic_write_file(const std::string& path, const std::string& bytes);

}  // namespace tba
