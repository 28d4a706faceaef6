#pragma once

#include <memory>
#include <string>
#include <vector>

#include "tba/frame.hpp"
#include "tba/importance.hpp"

namespace tba {

// One frame with its maps and the per-CTU features derived from them.
// Immutable after construction; safe to share across threads.
struct FrameContext {
  LumaFrame frame;
  ImportanceMap imp;
  InstanceMap inst;
  CtuGrid grid;
  std::string importance_path;  // empty when synthesized in memory
  std::string instance_path;

  std::vector<double> ctu_mask_ratio;
  std::vector<int> ctu_instances;
  double frame_mask_ratio = 0.0;

  static FrameContext make(LumaFrame frame, ImportanceMap imp, InstanceMap inst);
};

using FramePtr = std::shared_ptr<const FrameContext>;

// A directory of PGM frames paired with maps named <id>.imp.pgm and
// <id>.inst.pgm (instance map optional). Frames are ordered by frame_id.
struct Corpus {
  std::vector<FramePtr> frames;

  const FramePtr& by_id(const std::string& frame_id) const;
  std::vector<FramePtr> select(const std::vector<std::string>& ids) const;

  static Corpus load(const std::string& corpus_dir, const std::string& maps_dir);
};

std::string importance_map_path(const std::string& maps_dir, const std::string& frame_id);
std::string instance_map_path(const std::string& maps_dir, const std::string& frame_id);

}  // namespace tba
