#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tba/pgm.hpp"

namespace tba {

inline constexpr int kCtuSize = 64;

// One 8-bit luma raster, edge-padded to a multiple of the CTU size.
// width/height are the padded dimensions; source_* keep the ingested ones.
struct LumaFrame {
  int width = 0;
  int height = 0;
  int source_width = 0;
  int source_height = 0;
  std::string frame_id;
  std::vector<uint8_t> samples;  // row-major, width * height

  uint8_t at(int x, int y) const { return samples[static_cast<size_t>(y) * width + x]; }
};

struct CtuRect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;
};

// Raster-order CTU enumeration over a padded frame.
struct CtuGrid {
  int cols = 0;
  int rows = 0;

  int total() const { return cols * rows; }
  CtuRect rect(int ctu_index) const {
    return {(ctu_index % cols) * kCtuSize, (ctu_index / cols) * kCtuSize, kCtuSize, kCtuSize};
  }
  static CtuGrid for_frame(const LumaFrame& f) { return {f.width / kCtuSize, f.height / kCtuSize}; }
};

LumaFrame frame_from_pgm(const PgmImage& img, const std::string& frame_id);
LumaFrame load_frame(const std::string& path);  // frame_id = file stem

// Copies one 64x64 CTU out of the frame, row-major.
std::vector<uint8_t> extract_ctu(const LumaFrame& frame, int ctu_index);

}  // namespace tba
