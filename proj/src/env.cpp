#include "tba/env.hpp"

#include <algorithm>
#include <stdexcept>

#include "tba/codec.hpp"
#include "tba/errors.hpp"

namespace tba {

Action action_from_qp(int qp) {
  if (qp < kActionQpMin || qp > kActionQpMax) {
    throw std::domain_error("qp " + std::to_string(qp) + " outside action space [22,51]");
  }
  return {qp - kActionQpMin};
}

namespace {

double qp_feature(int qp) { return (qp - kQpAnchor) / 29.0; }

// Neighbor order everywhere: left, above, above-left, above-right.
std::array<int, 4> neighbor_indices(const CtuGrid& grid, int ctu_index) {
  const int cx = ctu_index % grid.cols;
  const int cy = ctu_index / grid.cols;
  auto at = [&](int x, int y) -> int {
    return (x >= 0 && x < grid.cols && y >= 0) ? y * grid.cols + x : -1;
  };
  return {at(cx - 1, cy), at(cx, cy - 1), at(cx - 1, cy - 1), at(cx + 1, cy - 1)};
}

}  // namespace

State assemble_state(const FrameContext& ctx, int ctu_index, int qp_left, int qp_above) {
  const int total = ctx.grid.total();
  if (ctu_index < 0 || ctu_index >= total) {
    throw std::domain_error("ctu index " + std::to_string(ctu_index) + " out of range");
  }

  State s;
  s.ctu_index = ctu_index;
  s.frame_id = ctx.frame.frame_id;

  const CtuRect r = ctx.grid.rect(ctu_index);
  s.local.resize(2 * static_cast<size_t>(kCtuPixels));
  for (int y = 0; y < kCtuSize; ++y) {
    for (int x = 0; x < kCtuSize; ++x) {
      const size_t p = static_cast<size_t>(y) * kCtuSize + x;
      s.local[p] = ctx.frame.at(r.x + x, r.y + y) / 255.0;
      s.local[kCtuPixels + p] = ctx.imp.weight(r.x + x, r.y + y);
    }
  }

  const auto nbr = neighbor_indices(ctx.grid, ctu_index);
  auto mask_of = [&](int c) { return c >= 0 ? ctx.ctu_mask_ratio[c] : 0.0; };
  auto inst_of = [&](int c) {
    return c >= 0 ? std::min(ctx.ctu_instances[c] / 8.0, 1.0) : 0.0;
  };

  s.global_vec[0] = total / 256.0;
  s.global_vec[1] = static_cast<double>(ctu_index) / total;
  s.global_vec[2] = ctx.ctu_mask_ratio[ctu_index];
  for (int k = 0; k < 4; ++k) s.global_vec[3 + k] = mask_of(nbr[k]);
  s.global_vec[7] = ctx.frame_mask_ratio;
  s.global_vec[8] = std::min(ctx.ctu_instances[ctu_index] / 8.0, 1.0);
  for (int k = 0; k < 4; ++k) s.global_vec[9 + k] = inst_of(nbr[k]);
  s.global_vec[13] = qp_feature(qp_left);
  s.global_vec[14] = qp_feature(qp_above);
  return s;
}

State make_state(const FrameContext& ctx, int ctu_index, std::span<const int> decided_qps) {
  if (decided_qps.size() != static_cast<size_t>(ctu_index)) {
    throw std::domain_error("decided_qps must cover exactly the CTUs before ctu_index");
  }
  const auto nbr = neighbor_indices(ctx.grid, ctu_index);
  const int qp_left = nbr[0] >= 0 ? decided_qps[nbr[0]] : kQpAnchor;
  const int qp_above = nbr[1] >= 0 ? decided_qps[nbr[1]] : kQpAnchor;
  return assemble_state(ctx, ctu_index, qp_left, qp_above);
}

double reward(double bpp_anchor, double bpp_chosen, double wdist_chosen, double wdist_anchor,
              const RewardParams& params) {
  if (bpp_anchor < 0.0 || bpp_chosen < 0.0) throw std::domain_error("negative bpp");
  const double excess = wdist_chosen > wdist_anchor ? wdist_chosen - wdist_anchor : 0.0;
  return params.lambda * (bpp_anchor - bpp_chosen) - excess / params.distortion_scale;
}

CtuCost CacheCosts::cost(const FrameContext& ctx, int ctu_index, int qp) {
  const TBARecord& r = cache_->at(ctx.frame.frame_id, ctu_index, qp);
  return {r.bpp, r.wdist};
}

CtuCost CodecCosts::cost(const FrameContext& ctx, int ctu_index, int qp) {
  const std::vector<uint8_t> ctu = extract_ctu(ctx.frame, ctu_index);
  const CtuCodingResult r = encode_ctu(ctu, qp);
  return {r.bpp, weighted_distortion(ctu, r.recon, ctx.imp, ctx.grid.rect(ctu_index))};
}

Episode::Episode(const FrameContext& ctx, CostProvider& costs, RewardParams params)
    : ctx_(&ctx), costs_(&costs), params_(params) {
  if (params.lambda <= 0.0 || params.distortion_scale <= 0.0) {
    throw std::domain_error("reward params must be strictly positive");
  }
  anchor_.resize(ctx.grid.total());
  current_ = assemble_state(*ctx_, 0, kQpAnchor, kQpAnchor);
}

const State& Episode::state() const {
  if (done()) throw std::domain_error("episode is done");
  return current_;
}

CtuCost Episode::anchor_cost(int ctu_index) {
  auto& slot = anchor_[ctu_index];
  if (!slot) slot = costs_->cost(*ctx_, ctu_index, kQpAnchor);
  return *slot;
}

Transition Episode::step(Action action) {
  if (done()) throw std::domain_error("step on finished episode");
  if (action.index < 0 || action.index >= kNumActions) {
    throw std::domain_error("action index out of range");
  }

  const int c = cursor_;
  const CtuCost anchor = anchor_cost(c);
  const CtuCost chosen = costs_->cost(*ctx_, c, action.qp());

  Transition tr;
  tr.state = current_;
  tr.action = action;
  tr.reward = reward(anchor.bpp, chosen.bpp, chosen.wdist, anchor.wdist, params_);

  decided_.push_back(action.qp());
  cursor_ += 1;
  tr.done = cursor_ >= ctx_->grid.total();
  if (!tr.done) {
    current_ = make_state(*ctx_, cursor_, decided_);
    tr.next_state = current_;
  }
  return tr;
}

EpisodeResult run_episode(const FrameContext& ctx, CostProvider& costs, RewardParams params,
                          const Policy& policy) {
  Episode ep(ctx, costs, params);
  EpisodeResult res;
  res.qps.reserve(ctx.grid.total());
  res.rewards.reserve(ctx.grid.total());
  while (!ep.done()) {
    const Action a = policy(ep.state());
    const Transition tr = ep.step(a);
    res.qps.push_back(a.qp());
    res.rewards.push_back(tr.reward);
    res.episode_return += tr.reward;
  }
  return res;
}

}  // namespace tba
