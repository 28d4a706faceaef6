#include "tba/corpus.hpp"

#include <algorithm>
#include <filesystem>

#include "tba/errors.hpp"

namespace fs = std::filesystem;

namespace tba {

FrameContext FrameContext::make(LumaFrame frame, ImportanceMap imp, InstanceMap inst) {
  FrameContext ctx;
  ctx.grid = CtuGrid::for_frame(frame);
  if (imp.width != frame.width || imp.height != frame.height) {
    throw std::domain_error("importance map size does not match padded frame " + frame.frame_id);
  }
  if (inst.width != frame.width || inst.height != frame.height) {
    throw std::domain_error("instance map size does not match padded frame " + frame.frame_id);
  }
  ctx.frame = std::move(frame);
  ctx.imp = std::move(imp);
  ctx.inst = std::move(inst);

  const int total = ctx.grid.total();
  ctx.ctu_mask_ratio.resize(total);
  ctx.ctu_instances.resize(total);
  for (int c = 0; c < total; ++c) {
    const CtuRect r = ctx.grid.rect(c);
    ctx.ctu_mask_ratio[c] = mask_ratio(ctx.imp, r);
    ctx.ctu_instances[c] = instance_count(ctx.inst, r);
  }
  ctx.frame_mask_ratio =
      mask_ratio(ctx.imp, CtuRect{0, 0, ctx.frame.width, ctx.frame.height});
  return ctx;
}

std::string importance_map_path(const std::string& maps_dir, const std::string& frame_id) {
  return (fs::path(maps_dir) / (frame_id + ".imp.pgm")).string();
}

std::string instance_map_path(const std::string& maps_dir, const std::string& frame_id) {
  return (fs::path(maps_dir) / (frame_id + ".inst.pgm")).string();
}

const FramePtr& Corpus::by_id(const std::string& frame_id) const {
  for (const auto& f : frames) {
    if (f->frame.frame_id == frame_id) return f;
  }
  throw ConfigError("frame '" + frame_id + "' not in corpus");
}

std::vector<FramePtr> Corpus::select(const std::vector<std::string>& ids) const {
  std::vector<FramePtr> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(by_id(id));
  return out;
}

Corpus Corpus::load(const std::string& corpus_dir, const std::string& maps_dir) {
  if (!fs::is_directory(corpus_dir)) throw ConfigError("corpus dir not found: " + corpus_dir);

  std::vector<std::string> paths;
  for (const auto& e : fs::directory_iterator(corpus_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".pgm") paths.push_back(e.path().string());
  }
  std::sort(paths.begin(), paths.end());

  Corpus corpus;
  for (const auto& p : paths) {
    LumaFrame frame = load_frame(p);
    const std::string imp_path = importance_map_path(maps_dir, frame.frame_id);
    if (!fs::exists(imp_path)) {
      throw ConfigError("frame '" + frame.frame_id + "' has no importance map at " + imp_path);
    }
    ImportanceMap imp = load_importance(imp_path, frame);

    const std::string inst_path = instance_map_path(maps_dir, frame.frame_id);
    InstanceMap inst;
    std::string inst_path_used;
    if (fs::exists(inst_path)) {
      inst = load_instance(inst_path, frame);
      inst_path_used = inst_path;
    } else {
      inst = all_background(frame.width, frame.height);
    }

    FrameContext ctx = FrameContext::make(std::move(frame), std::move(imp), std::move(inst));
    ctx.importance_path = imp_path;
    ctx.instance_path = inst_path_used;
    corpus.frames.push_back(std::make_shared<const FrameContext>(std::move(ctx)));
  }
  return corpus;
}

}  // namespace tba
