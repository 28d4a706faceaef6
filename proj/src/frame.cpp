#include "tba/frame.hpp"

#include <filesystem>
#include <stdexcept>

#include "tba/errors.hpp"

namespace tba {

LumaFrame frame_from_pgm(const PgmImage& img, const std::string& frame_id) {
  if (img.width <= 0 || img.height <= 0) throw std::domain_error("empty frame " + frame_id);

  LumaFrame f;
  f.frame_id = frame_id;
  f.source_width = img.width;
  f.source_height = img.height;
  f.width = (img.width + kCtuSize - 1) / kCtuSize * kCtuSize;
  f.height = (img.height + kCtuSize - 1) / kCtuSize * kCtuSize;
  f.samples.resize(static_cast<size_t>(f.width) * f.height);
  for (int y = 0; y < f.height; ++y) {
    const int sy = y < img.height ? y : img.height - 1;
    for (int x = 0; x < f.width; ++x) {
      const int sx = x < img.width ? x : img.width - 1;
      f.samples[static_cast<size_t>(y) * f.width + x] = img.at(sx, sy);
    }
  }
  return f;
}

LumaFrame load_frame(const std::string& path) {
  return frame_from_pgm(load_pgm(path), std::filesystem::path(path).stem().string());
}

std::vector<uint8_t> extract_ctu(const LumaFrame& frame, int ctu_index) {
  const CtuGrid grid = CtuGrid::for_frame(frame);
  if (ctu_index < 0 || ctu_index >= grid.total()) {
    throw std::domain_error("ctu index " + std::to_string(ctu_index) + " out of range");
  }
  const CtuRect r = grid.rect(ctu_index);
  std::vector<uint8_t> out(static_cast<size_t>(kCtuSize) * kCtuSize);
  for (int y = 0; y < kCtuSize; ++y) {
    const uint8_t* src = &frame.samples[static_cast<size_t>(r.y + y) * frame.width + r.x];
    std::copy(src, src + kCtuSize, &out[static_cast<size_t>(y) * kCtuSize]);
  }
  return out;
}

}  // namespace tba
