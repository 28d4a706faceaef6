#pragma once

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tba/corpus.hpp"
#include "tba/dataset.hpp"

namespace tba {

inline constexpr int kQpAnchor = 22;
inline constexpr int kActionQpMin = 22;
inline constexpr int kActionQpMax = 51;
inline constexpr int kNumActions = kActionQpMax - kActionQpMin + 1;  // 30
inline constexpr int kGlobalDim = 15;

// One QP decision. index 0..29 maps onto QP 22..51.
struct Action {
  int index = 0;
  int qp() const { return kActionQpMin + index; }
};

Action action_from_qp(int qp);

// Agent observation for one CTU: two 64x64 local channels (luma/255 and
// importance weights, channel-major) plus the 15-d global feature vector:
//   [0]     ctu count / 256
//   [1]     ctu index / ctu count
//   [2]     mask ratio of the current CTU
//   [3..6]  mask ratio of left, above, above-left, above-right neighbors
//   [7]     mask ratio of the whole frame
//   [8]     min(instance count / 8, 1) of the current CTU
//   [9..12] same for the four neighbors
//   [13,14] (qp - 22) / 29 of the left and above CTUs
// Unavailable neighbors contribute 0 (neighbor QP defaults to the anchor).
struct State {
  std::vector<double> local;  // 2 * 64 * 64
  std::array<double, kGlobalDim> global_vec{};
  int ctu_index = 0;
  std::string frame_id;
};

struct RewardParams {
  double lambda = 1.0;
  double distortion_scale = 1.0;
};

struct Transition {
  State state;
  Action action;
  double reward = 0.0;
  std::optional<State> next_state;  // empty at end of frame
  bool done = false;
};

State make_state(const FrameContext& ctx, int ctu_index, std::span<const int> decided_qps);

// Internal assembly used by make_state and by replay reconstruction;
// neighbor QPs are passed directly (anchor = unavailable).
State assemble_state(const FrameContext& ctx, int ctu_index, int qp_left, int qp_above);

// lambda * (bpp_anchor - bpp_chosen) - max(0, wdist_chosen - wdist_anchor) / scale
double reward(double bpp_anchor, double bpp_chosen, double wdist_chosen, double wdist_anchor,
              const RewardParams& params);

// Per-CTU rate/distortion source: a prebuilt cache during training, the
// live codec at inference time.
struct CtuCost {
  double bpp = 0.0;
  double wdist = 0.0;
};

class CostProvider {
 public:
  virtual ~CostProvider() = default;
  virtual CtuCost cost(const FrameContext& ctx, int ctu_index, int qp) = 0;
};

class CacheCosts final : public CostProvider {
 public:
  explicit CacheCosts(const TBACache& cache) : cache_(&cache) {}
  CtuCost cost(const FrameContext& ctx, int ctu_index, int qp) override;

 private:
  const TBACache* cache_;
};

class CodecCosts final : public CostProvider {
 public:
  CtuCost cost(const FrameContext& ctx, int ctu_index, int qp) override;
};

// One frame processed CTU by CTU in raster order.
class Episode {
 public:
  Episode(const FrameContext& ctx, CostProvider& costs, RewardParams params);

  bool done() const { return cursor_ >= ctx_->grid.total(); }
  const State& state() const;
  int cursor() const { return cursor_; }
  const std::vector<int>& decided_qps() const { return decided_; }

  Transition step(Action action);

 private:
  CtuCost anchor_cost(int ctu_index);

  const FrameContext* ctx_;
  CostProvider* costs_;
  RewardParams params_;
  int cursor_ = 0;
  std::vector<int> decided_;
  std::vector<std::optional<CtuCost>> anchor_;
  State current_;
};

using Policy = std::function<Action(const State&)>;

struct EpisodeResult {
  std::vector<int> qps;
  std::vector<double> rewards;
  double episode_return = 0.0;
};

EpisodeResult run_episode(const FrameContext& ctx, CostProvider& costs, RewardParams params,
                          const Policy& policy);

}  // namespace tba
