#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "tba/corpus.hpp"

namespace tba {

// One (frame, CTU, QP) row of the precomputed rate/distortion cache.
struct TBARecord {
  std::string frame_id;
  int ctu_index = 0;
  int qp = 0;
  long long bits = 0;
  double bpp = 0.0;   // bits / 4096, exact
  double mse = 0.0;
  double wdist = 0.0;  // importance-weighted distortion

  bool operator==(const TBARecord&) const = default;
};

// Manifest entry describing one frame of the cache's corpus.
struct FrameInfo {
  std::string frame_id;
  int source_width = 0, source_height = 0;
  int width = 0, height = 0;  // padded
  int grid_cols = 0, grid_rows = 0;
  std::string importance_map;
  std::string instance_map;  // empty = all background
  double frame_mask_ratio = 0.0;
  std::vector<double> ctu_mask_ratio;
};

enum class SplitSet { train, test };

// The full QP-sweep cache plus its manifest and train/test assignment.
// Records are sorted by (frame_id, ctu_index, qp) and cover every triple
// in range exactly once.
struct TBACache {
  std::vector<TBARecord> records;
  std::vector<FrameInfo> frames;  // sorted by frame_id
  int qp_lo = 22;
  int qp_hi = 51;
  uint64_t split_seed = 0;
  double split_ratio = 0.0;
  std::map<std::string, SplitSet> split;  // empty until split_cache
  double anchor_mean_mse = 0.0;           // corpus mean MSE at QP 22

  int qp_count() const { return qp_hi - qp_lo + 1; }
  const FrameInfo& frame_info(const std::string& frame_id) const;
  const TBARecord& at(const std::string& frame_id, int ctu_index, int qp) const;
  TBARecord& at_mut(const std::string& frame_id, int ctu_index, int qp);
  bool has(const std::string& frame_id) const;
  std::vector<std::string> frame_ids(SplitSet set) const;

  void rebuild_index();

 private:
  std::unordered_map<std::string, size_t> frame_base_;  // frame_id -> record offset
  std::unordered_map<std::string, size_t> frame_pos_;   // frame_id -> frames[] index
};

// Encodes every frame at every QP in [qp_lo, qp_hi] with a uniform QP and
// collects one record per CTU. Deterministic regardless of jobs.
TBACache build_cache(const Corpus& corpus, int qp_lo = 22, int qp_hi = 51, int jobs = 1);

// Shuffles frames with the seeded RNG and assigns the first
// floor(ratio * n) to train, the rest to test.
void split_cache(TBACache& cache, double ratio, uint64_t seed);

// Replaces wdist from a frame-level distortion file
// (CSV: frame_id,qp,distortion), apportioned to CTUs by their share of
// mask_ratio * mse at that QP; uniform when the total share is zero.
void ingest_task_distortion(TBACache& cache, const std::string& csv_path);

void save_cache(const TBACache& cache, const std::string& csv_path,
                const std::string& manifest_path);
TBACache load_cache(const std::string& csv_path, const std::string& manifest_path);

// Nearest double whose %.9g rendering round-trips exactly; applied to mse
// and wdist when records are created so the CSV is lossless.
double round9(double v);

std::string default_manifest_path(const std::string& csv_path);

}  // namespace tba
