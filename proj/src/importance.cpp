#include "tba/importance.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "tba/errors.hpp"

namespace tba {

namespace {

void check_rect(int mw, int mh, const CtuRect& r) {
  if (r.x < 0 || r.y < 0 || r.w <= 0 || r.h <= 0 || r.x + r.w > mw || r.y + r.h > mh) {
    throw std::domain_error("rect out of map bounds");
  }
}

// Crop or edge-replicate src to the frame's padded size. The source must
// cover the ingested frame.
std::vector<uint8_t> conform(const PgmImage& src, const LumaFrame& frame, const std::string& path) {
  if (src.width < frame.source_width || src.height < frame.source_height) {
    throw std::domain_error(path + ": map " + std::to_string(src.width) + "x" +
                            std::to_string(src.height) + " smaller than frame " +
                            std::to_string(frame.source_width) + "x" +
                            std::to_string(frame.source_height));
  }
  std::vector<uint8_t> out(static_cast<size_t>(frame.width) * frame.height);
  for (int y = 0; y < frame.height; ++y) {
    const int sy = y < src.height ? y : src.height - 1;
    for (int x = 0; x < frame.width; ++x) {
      const int sx = x < src.width ? x : src.width - 1;
      out[static_cast<size_t>(y) * frame.width + x] = src.at(sx, sy);
    }
  }
  return out;
}

}  // namespace

ImportanceMap load_importance(const std::string& path, const LumaFrame& frame) {
  const PgmImage img = load_pgm(path);
  return {frame.width, frame.height, conform(img, frame, path)};
}

InstanceMap load_instance(const std::string& path, const LumaFrame& frame) {
  const PgmImage img = load_pgm(path);
  return {frame.width, frame.height, conform(img, frame, path)};
}

InstanceMap all_background(int width, int height) {
  return {width, height, std::vector<uint8_t>(static_cast<size_t>(width) * height, 0)};
}

double mask_ratio(const ImportanceMap& map, const CtuRect& rect, double threshold) {
  check_rect(map.width, map.height, rect);
  if (threshold < 0.0 || threshold > 1.0) throw std::domain_error("threshold outside [0,1]");
  long hits = 0;
  for (int y = rect.y; y < rect.y + rect.h; ++y) {
    for (int x = rect.x; x < rect.x + rect.w; ++x) {
      if (map.weight(x, y) > threshold) ++hits;
    }
  }
  return static_cast<double>(hits) / (static_cast<double>(rect.w) * rect.h);
}

int instance_count(const InstanceMap& map, const CtuRect& rect) {
  check_rect(map.width, map.height, rect);
  bool seen[256] = {};
  int count = 0;
  for (int y = rect.y; y < rect.y + rect.h; ++y) {
    for (int x = rect.x; x < rect.x + rect.w; ++x) {
      const uint8_t id = map.id(x, y);
      if (id != 0 && !seen[id]) {
        seen[id] = true;
        ++count;
      }
    }
  }
  return count;
}

double weighted_distortion(std::span<const uint8_t> orig, std::span<const uint8_t> recon,
                           const ImportanceMap& map, const CtuRect& rect) {
  if (orig.size() != recon.size() ||
      orig.size() != static_cast<size_t>(rect.w) * static_cast<size_t>(rect.h)) {
    throw std::domain_error("weighted_distortion shape mismatch");
  }
  check_rect(map.width, map.height, rect);
  double acc = 0.0;
  for (int y = 0; y < rect.h; ++y) {
    for (int x = 0; x < rect.w; ++x) {
      const size_t p = static_cast<size_t>(y) * rect.w + x;
      const double d = static_cast<double>(orig[p]) - static_cast<double>(recon[p]);
      acc += map.weight(rect.x + x, rect.y + y) * d * d;
    }
  }
  return acc / (static_cast<double>(rect.w) * rect.h);
}

MapSpecFile load_map_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  try {
    MapSpecFile spec;
    spec.seed = j.at("seed").get<uint64_t>();
    for (const auto& jf : j.at("frames")) {
      FrameMapSpec f;
      f.frame_id = jf.at("frame_id").get<std::string>();
      f.width = jf.at("width").get<int>();
      f.height = jf.at("height").get<int>();
      if (f.width <= 0 || f.height <= 0) throw FormatError(path + ": bad frame dimensions");
      for (const auto& jb : jf.value("blobs", nlohmann::json::array())) {
        f.blobs.push_back({jb.at("cx").get<double>(), jb.at("cy").get<double>(),
                           jb.at("sigma").get<double>(), jb.value("peak", 1.0)});
      }
      for (const auto& jb : jf.value("boxes", nlohmann::json::array())) {
        f.boxes.push_back({jb.at("x").get<int>(), jb.at("y").get<int>(), jb.at("w").get<int>(),
                           jb.at("h").get<int>(), jb.at("id").get<int>()});
      }
      spec.frames.push_back(std::move(f));
    }
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

std::string dump_map_spec(const MapSpecFile& spec) {
  nlohmann::json j;
  j["seed"] = spec.seed;
  j["frames"] = nlohmann::json::array();
  for (const auto& f : spec.frames) {
    nlohmann::json jf;
    jf["frame_id"] = f.frame_id;
    jf["width"] = f.width;
    jf["height"] = f.height;
    jf["blobs"] = nlohmann::json::array();
    for (const auto& b : f.blobs) {
      jf["blobs"].push_back({{"cx", b.cx}, {"cy", b.cy}, {"sigma", b.sigma}, {"peak", b.peak}});
    }
    jf["boxes"] = nlohmann::json::array();
    for (const auto& b : f.boxes) {
      jf["boxes"].push_back({{"x", b.x}, {"y", b.y}, {"w", b.w}, {"h", b.h}, {"id", b.id}});
    }
    j["frames"].push_back(std::move(jf));
  }
  return j.dump(2) + "\n";
}

std::pair<ImportanceMap, InstanceMap> synth_maps(const FrameMapSpec& spec) {
  for (const auto& b : spec.blobs) {
    if (b.cx < 0 || b.cy < 0 || b.cx >= spec.width || b.cy >= spec.height || b.sigma <= 0) {
      throw std::domain_error("blob outside frame bounds in spec for " + spec.frame_id);
    }
  }
  for (const auto& b : spec.boxes) {
    if (b.x < 0 || b.y < 0 || b.w <= 0 || b.h <= 0 || b.x + b.w > spec.width ||
        b.y + b.h > spec.height || b.id < 1 || b.id > 255) {
      throw std::domain_error("box outside frame bounds in spec for " + spec.frame_id);
    }
  }

  ImportanceMap imp{spec.width, spec.height,
                    std::vector<uint8_t>(static_cast<size_t>(spec.width) * spec.height, 0)};
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      double w = 0.0;
      for (const auto& b : spec.blobs) {
        const double dx = x - b.cx;
        const double dy = y - b.cy;
        w += b.peak * std::exp(-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma));
      }
      if (w > 1.0) w = 1.0;
      imp.values[static_cast<size_t>(y) * spec.width + x] =
          static_cast<uint8_t>(std::llround(w * 255.0));
    }
  }

  InstanceMap inst = all_background(spec.width, spec.height);
  for (const auto& b : spec.boxes) {
    for (int y = b.y; y < b.y + b.h; ++y) {
      for (int x = b.x; x < b.x + b.w; ++x) {
        inst.ids[static_cast<size_t>(y) * spec.width + x] = static_cast<uint8_t>(b.id);
      }
    }
  }
  return {std::move(imp), std::move(inst)};
}

}  // namespace tba
