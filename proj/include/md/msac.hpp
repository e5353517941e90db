#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "md/rigid.hpp"

namespace md {

struct MsacParams {
  double threshold_px = 2.0;
  double confidence = 0.99;
  int max_iters = 2000;
  int min_inliers = 6;
  std::uint64_t seed = 0;
  bool record_candidates = false;  // keep every scored hypothesis cost in the result
};

struct MsacResult {
  RigidTransform transform;
  std::vector<std::uint8_t> inlier_mask;  // residual <= threshold under `transform`
  double cost = 0.0;                      // sum of min(r^2, T^2) under `transform`
  int iterations_used = 0;
  bool fallback = false;  // degenerate input; transform is identity
  std::vector<double> candidate_costs;

  int inlier_count() const;
};

// Truncated quadratic cost: sum over pairs of min(|t(moving) - fixed|^2, T^2).
double msac_cost(std::span<const Correspondence> pairs, const RigidTransform& t, double threshold_px);

// Robust rigid fit. Hypotheses come from uniformly sampled 2-point subsets
// (seeded), are scored by msac_cost, and the best is kept; the loop stops once
// the iteration count reaches log(1 - confidence) / log(1 - w^2) for the best
// inlier ratio w. The winner is refit by least squares on its inliers and the
// refit kept when it does not raise the cost. Fewer than 2 pairs or fewer than
// min_inliers inliers yields identity with fallback = true.
MsacResult estimate_msac(std::span<const Correspondence> pairs, const MsacParams& params);

}  // namespace md
