#include "tba/eval.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "tba/codec.hpp"
#include "tba/errors.hpp"

namespace tba {

namespace {

AllocationResult collect(const FrameContext& ctx, CostProvider& costs,
                         const std::vector<int>& qps, double episode_return) {
  AllocationResult r;
  r.frame_id = ctx.frame.frame_id;
  r.qps = qps;
  const int total = ctx.grid.total();
  r.ctu_bits.resize(total);
  r.ctu_wdist.resize(total);
  for (int c = 0; c < total; ++c) {
    const CtuCost cost = costs.cost(ctx, c, qps[c]);
    r.ctu_bits[c] = std::llround(cost.bpp * kCtuPixels);
    r.ctu_wdist[c] = cost.wdist;
    r.total_bits += r.ctu_bits[c];
    r.wdist += cost.wdist;
  }
  r.wdist /= total;
  r.bpp = static_cast<double>(r.total_bits) /
          (static_cast<double>(ctx.frame.width) * ctx.frame.height);
  r.episode_return = episode_return;
  return r;
}

double mean_bpp(const std::vector<AllocationResult>& runs) {
  double acc = 0.0;
  for (const auto& r : runs) acc += r.bpp;
  return runs.empty() ? 0.0 : acc / static_cast<double>(runs.size());
}

double mean_wdist(const std::vector<AllocationResult>& runs) {
  double acc = 0.0;
  for (const auto& r : runs) acc += r.wdist;
  return runs.empty() ? 0.0 : acc / static_cast<double>(runs.size());
}

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f%%", v);
  return buf;
}

}  // namespace

std::vector<AllocationResult> fixed_qp_run(const FrameSet& frames, CostProvider& costs, int qp) {
  if (qp < kActionQpMin || qp > kActionQpMax) {
    throw std::domain_error("fixed qp outside [22,51]");
  }
  std::vector<AllocationResult> out;
  out.reserve(frames.size());
  for (const auto& f : frames) {
    const std::vector<int> qps(f->grid.total(), qp);
    out.push_back(collect(*f, costs, qps, 0.0));
  }
  return out;
}

std::vector<AllocationResult> agent_run(const QNetwork& net, const FrameSet& frames,
                                        CostProvider& costs, const RewardParams& params) {
  if (net.topology().local_size != kCtuSize || net.topology().global_dim != kGlobalDim ||
      net.topology().n_actions != kNumActions) {
    throw ConfigError("model dimensions do not match the environment");
  }
  std::vector<AllocationResult> out;
  out.reserve(frames.size());
  const Policy greedy = [&](const State& s) { return greedy_action(q_values(net, s)); };
  for (const auto& f : frames) {
    const EpisodeResult ep = run_episode(*f, costs, params, greedy);
    out.push_back(collect(*f, costs, ep.qps, ep.episode_return));
  }
  return out;
}

std::vector<AllocationResult> oracle_allocation(const FrameSet& frames, const TBACache& cache,
                                                const RewardParams& params) {
  CacheCosts costs(cache);
  std::vector<AllocationResult> out;
  out.reserve(frames.size());
  for (const auto& f : frames) {
    const int total = f->grid.total();
    std::vector<int> qps(total);
    double ret = 0.0;
    for (int c = 0; c < total; ++c) {
      const CtuCost anchor = costs.cost(*f, c, kQpAnchor);
      double best = -std::numeric_limits<double>::infinity();
      int best_qp = kActionQpMin;
      for (int qp = kActionQpMin; qp <= kActionQpMax; ++qp) {
        const CtuCost cand = costs.cost(*f, c, qp);
        const double r = reward(anchor.bpp, cand.bpp, cand.wdist, anchor.wdist, params);
        if (r > best) {
          best = r;
          best_qp = qp;
        }
      }
      qps[c] = best_qp;
      ret += best;
    }
    out.push_back(collect(*f, costs, qps, ret));
  }
  return out;
}

void finalize_against_anchor(std::vector<AllocationResult>& runs,
                             const std::vector<AllocationResult>& anchor) {
  if (runs.size() != anchor.size()) throw std::domain_error("anchor run size mismatch");
  for (size_t i = 0; i < runs.size(); ++i) {
    if (runs[i].frame_id != anchor[i].frame_id) {
      throw std::domain_error("anchor frame order mismatch");
    }
    runs[i].br_fraction = anchor[i].bpp > 0.0 ? 1.0 - runs[i].bpp / anchor[i].bpp : 0.0;
  }
}

RunSummary summarize(const std::vector<AllocationResult>& runs,
                     const std::vector<AllocationResult>& anchor, double distortion_scale) {
  if (runs.size() != anchor.size() || runs.empty()) {
    throw std::domain_error("summarize needs matching non-empty runs");
  }
  RunSummary s;
  s.mean_bpp = mean_bpp(runs);
  s.mean_wdist = mean_wdist(runs);
  const double anchor_bpp = mean_bpp(anchor);
  s.br = anchor_bpp > 0.0 ? 1.0 - s.mean_bpp / anchor_bpp : 0.0;

  double excess = 0.0;
  size_t n = 0;
  for (size_t i = 0; i < runs.size(); ++i) {
    for (size_t c = 0; c < runs[i].ctu_wdist.size(); ++c) {
      const double e = runs[i].ctu_wdist[c] - anchor[i].ctu_wdist[c];
      excess += e > 0.0 ? e : 0.0;
      ++n;
    }
  }
  s.dist_pct = n > 0 ? 100.0 * (excess / static_cast<double>(n)) / distortion_scale : 0.0;

  double ret = 0.0;
  for (const auto& r : runs) ret += r.episode_return;
  s.mean_return = ret / static_cast<double>(runs.size());
  return s;
}

namespace {

BaselinePick pick_baseline(const FrameSet& frames, CostProvider& costs, double target,
                           bool by_rate) {
  BaselinePick best;
  double best_gap = std::numeric_limits<double>::infinity();
  for (int qp = kActionQpMin; qp <= kActionQpMax; ++qp) {
    std::vector<AllocationResult> runs = fixed_qp_run(frames, costs, qp);
    const double value = by_rate ? mean_bpp(runs) : mean_wdist(runs);
    const double gap = std::abs(value - target);
    // rate ties prefer the lower QP (strict <), distortion ties the higher
    const bool better = by_rate ? gap < best_gap : gap <= best_gap;
    if (better) {
      best_gap = gap;
      best.qp = qp;
      best.runs = std::move(runs);
    }
  }
  return best;
}

}  // namespace

BaselinePick find_equivalent_rate_baseline(const FrameSet& frames, CostProvider& costs,
                                           double target_mean_bpp) {
  return pick_baseline(frames, costs, target_mean_bpp, true);
}

BaselinePick find_equivalent_distortion_baseline(const FrameSet& frames, CostProvider& costs,
                                                 double target_mean_wdist) {
  return pick_baseline(frames, costs, target_mean_wdist, false);
}

double relative_saving(double br_proposed, double br_baseline) {
  if (br_baseline >= 1.0) throw std::domain_error("baseline bit-rate reduction must be < 1");
  return (br_proposed - br_baseline) / (1.0 - br_baseline);
}

Report make_report(const ReportRow& anchor, const ReportRow& proposed, const ReportRow& baseline,
                   const ReportRow& baseline_star) {
  Report rep;
  rep.rows = {anchor, proposed, baseline, baseline_star};
  rep.relative_saving_pct = 100.0 * relative_saving(proposed.br_pct / 100.0,
                                                    baseline_star.br_pct / 100.0);

  std::string text;
  text += "bit-rate reduction and distortion proxy vs fixed QP 22\n";
  text += "(DIST = mean weighted-MSE excess over the QP 22 anchor / scale)\n\n";
  char line[160];
  std::snprintf(line, sizeof(line), "%-12s %8s %8s %6s\n", "scheme", "BR", "DIST", "QP");
  text += line;
  for (const auto& r : rep.rows) {
    std::string qp = r.fixed_qp >= 0 ? std::to_string(r.fixed_qp) : "-";
    std::snprintf(line, sizeof(line), "%-12s %8s %8s %6s\n", r.label.c_str(),
                  pct(r.br_pct).c_str(), pct(r.dist_pct).c_str(), qp.c_str());
    text += line;
  }
  std::snprintf(line, sizeof(line),
                "\nrelative saving vs equivalent-distortion baseline: %s\n",
                pct(rep.relative_saving_pct).c_str());
  text += line;
  rep.text = text;

  std::string csv = "scheme,br_pct,dist_pct,fixed_qp\n";
  for (const auto& r : rep.rows) {
    char row[160];
    std::snprintf(row, sizeof(row), "%s,%.1f,%.1f,%s\n", r.label.c_str(), r.br_pct, r.dist_pct,
                  r.fixed_qp >= 0 ? std::to_string(r.fixed_qp).c_str() : "");
    csv += row;
  }
  char foot[80];
  std::snprintf(foot, sizeof(foot), "relative_saving,%.1f,,\n", rep.relative_saving_pct);
  csv += foot;
  rep.csv = csv;
  return rep;
}

std::string allocation_csv(const std::vector<AllocationResult>& runs) {
  std::string out = "frame_id,ctu_index,qp,bits,wdist\n";
  char buf[160];
  for (const auto& r : runs) {
    for (size_t c = 0; c < r.qps.size(); ++c) {
      std::snprintf(buf, sizeof(buf), "%s,%zu,%d,%lld,%.9g\n", r.frame_id.c_str(), c, r.qps[c],
                    r.ctu_bits[c], r.ctu_wdist[c]);
      out += buf;
    }
  }
  return out;
}

}  // namespace tba
