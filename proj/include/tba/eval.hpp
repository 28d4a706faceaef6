#pragma once

#include <string>
#include <vector>

#include "tba/agent.hpp"
#include "tba/env.hpp"

namespace tba {

// One frame's allocation outcome. br_fraction is filled against the
// QP 22 anchor by finalize_against_anchor.
struct AllocationResult {
  std::string frame_id;
  std::vector<int> qps;
  std::vector<long long> ctu_bits;
  std::vector<double> ctu_wdist;
  long long total_bits = 0;
  double bpp = 0.0;
  double wdist = 0.0;  // mean of CTU wdist
  double br_fraction = 0.0;
  double episode_return = 0.0;
};

using FrameSet = std::vector<FramePtr>;

std::vector<AllocationResult> fixed_qp_run(const FrameSet& frames, CostProvider& costs, int qp);

// Greedy (epsilon = 0) allocation with the trained network.
std::vector<AllocationResult> agent_run(const QNetwork& net, const FrameSet& frames,
                                        CostProvider& costs, const RewardParams& params);

// Exact per-CTU reward maximizer over the 30-QP sweep (ties: lower QP).
std::vector<AllocationResult> oracle_allocation(const FrameSet& frames, const TBACache& cache,
                                                const RewardParams& params);

void finalize_against_anchor(std::vector<AllocationResult>& runs,
                             const std::vector<AllocationResult>& anchor);

// Corpus aggregates for one run.
struct RunSummary {
  double mean_bpp = 0.0;
  double mean_wdist = 0.0;
  double br = 0.0;        // 1 - mean_bpp / anchor mean_bpp
  double dist_pct = 0.0;  // 100 * mean positive wdist excess / scale
  double mean_return = 0.0;
  int fixed_qp = -1;  // set for fixed-QP runs
};

RunSummary summarize(const std::vector<AllocationResult>& runs,
                     const std::vector<AllocationResult>& anchor, double distortion_scale);

struct BaselinePick {
  int qp = 22;
  std::vector<AllocationResult> runs;
};

// Fixed QP whose corpus mean bpp lands closest to the target
// (ties prefer the lower QP).
BaselinePick find_equivalent_rate_baseline(const FrameSet& frames, CostProvider& costs,
                                           double target_mean_bpp);

// Fixed QP whose corpus mean weighted distortion lands closest to the
// target (ties prefer the higher QP).
BaselinePick find_equivalent_distortion_baseline(const FrameSet& frames, CostProvider& costs,
                                                 double target_mean_wdist);

// (br_proposed - br_baseline) / (1 - br_baseline)
double relative_saving(double br_proposed, double br_baseline);

struct ReportRow {
  std::string label;
  double br_pct = 0.0;
  double dist_pct = 0.0;
  int fixed_qp = -1;
};

struct Report {
  std::vector<ReportRow> rows;
  double relative_saving_pct = 0.0;
  std::string text;
  std::string csv;
};

Report make_report(const ReportRow& anchor, const ReportRow& proposed, const ReportRow& baseline,
                   const ReportRow& baseline_star);

std::string allocation_csv(const std::vector<AllocationResult>& runs);

}  // namespace tba
