#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tba/frame.hpp"

namespace tba {

// Per-pixel task weights in [0,1]. Values are kept in the 8-bit form of
// the PGM interchange format (weight = value / 255), so a map rendered in
// memory and a map round-tripped through a file behave identically.
struct ImportanceMap {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> values;

  double weight(int x, int y) const {
    return values[static_cast<size_t>(y) * width + x] / 255.0;
  }
};

// Per-pixel instance identifiers, 0 = background.
struct InstanceMap {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> ids;

  uint8_t id(int x, int y) const { return ids[static_cast<size_t>(y) * width + x]; }
};

// Loads a PGM map and conforms it to the frame's padded size: the source
// must cover at least the frame's ingested size and is cropped / edge-
// replicated to the padded rectangle.
ImportanceMap load_importance(const std::string& path, const LumaFrame& frame);
InstanceMap load_instance(const std::string& path, const LumaFrame& frame);

InstanceMap all_background(int width, int height);

// Fraction of rect pixels whose weight exceeds threshold (default 0.5).
double mask_ratio(const ImportanceMap& map, const CtuRect& rect, double threshold = 0.5);

// Number of distinct nonzero ids intersecting the rect.
int instance_count(const InstanceMap& map, const CtuRect& rect);

// Importance-weighted squared error between a CTU and its reconstruction:
// sum_p w_p (orig_p - recon_p)^2 / 4096. Always <= plain MSE.
double weighted_distortion(std::span<const uint8_t> orig, std::span<const uint8_t> recon,
                           const ImportanceMap& map, const CtuRect& rect);

// Synthetic map descriptors (JSON interchange for gen-maps).
struct GaussBlob {
  double cx = 0, cy = 0, sigma = 1, peak = 1;
};
struct IdBox {
  int x = 0, y = 0, w = 0, h = 0, id = 0;
};
struct FrameMapSpec {
  std::string frame_id;
  int width = 0, height = 0;
  std::vector<GaussBlob> blobs;
  std::vector<IdBox> boxes;
};
struct MapSpecFile {
  uint64_t seed = 0;
  std::vector<FrameMapSpec> frames;
};

MapSpecFile load_map_spec(const std::string& path);
std::string dump_map_spec(const MapSpecFile& spec);

// Renders the importance map as a clamped sum of isotropic Gaussian blobs
// and the instance map as painted boxes. Deterministic per spec entry.
std::pair<ImportanceMap, InstanceMap> synth_maps(const FrameMapSpec& spec);

}  // namespace tba
