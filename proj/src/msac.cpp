#include "md/msac.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "md/rng.hpp"

namespace md {
namespace {

double residual_sq(const Correspondence& c, const RigidTransform& t) {
  const Point2 p = t.apply(c.moving);
  const double dx = p.x - c.fixed.x, dy = p.y - c.fixed.y;
  return dx * dx + dy * dy;
}

int count_inliers(std::span<const Correspondence> pairs, const RigidTransform& t, double t2) {
  int n = 0;
  for (const auto& c : pairs) n += residual_sq(c, t) <= t2 ? 1 : 0;
  return n;
}

long required_iterations(double inlier_ratio, double confidence, int max_iters) {
  if (inlier_ratio >= 1.0) return 1;
  const double p_good = inlier_ratio * inlier_ratio;
  if (p_good <= 0.0) return max_iters;
  const double n = std::log(1.0 - confidence) / std::log(1.0 - p_good);
  if (!std::isfinite(n) || n > max_iters) return max_iters;
  return std::max(1L, static_cast<long>(std::ceil(n)));
}

void finalize(std::span<const Correspondence> pairs, double t2, MsacResult& r) {
  r.inlier_mask.resize(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) r.inlier_mask[i] = residual_sq(pairs[i], r.transform) <= t2;
}

}  // namespace

int MsacResult::inlier_count() const {
  return static_cast<int>(std::count(inlier_mask.begin(), inlier_mask.end(), std::uint8_t{1}));
}

double msac_cost(std::span<const Correspondence> pairs, const RigidTransform& t, double threshold_px) {
  const double t2 = threshold_px * threshold_px;
  double cost = 0.0;
  for (const auto& c : pairs) cost += std::min(residual_sq(c, t), t2);
  return cost;
}

MsacResult estimate_msac(std::span<const Correspondence> pairs, const MsacParams& params) {
  if (!(params.threshold_px > 0.0) || !(params.confidence > 0.0 && params.confidence < 1.0) ||
      params.max_iters < 1) {
    throw std::invalid_argument("estimate_msac: invalid parameters");
  }
  const double t2 = params.threshold_px * params.threshold_px;
  MsacResult r;
  auto fall_back = [&] {
    r.transform = RigidTransform::identity();
    r.fallback = true;
    r.cost = msac_cost(pairs, r.transform, params.threshold_px);
    finalize(pairs, t2, r);
    return r;
  };
  const std::size_t n = pairs.size();
  if (n < 2) return fall_back();

  Rng rng(params.seed);
  double best_cost = std::numeric_limits<double>::infinity();
  RigidTransform best;
  bool found = false;
  long required = params.max_iters;
  int iters = 0;
  while (iters < params.max_iters && iters < required) {
    ++iters;
    const std::size_t i = rng.index(n);
    std::size_t j = rng.index(n - 1);
    if (j >= i) ++j;
    const Correspondence sample[2] = {pairs[i], pairs[j]};
    RigidTransform candidate;
    try {
      candidate = estimate_rigid(sample);
    } catch (const std::invalid_argument&) {
      continue;  // coincident points
    }
    const double cost = msac_cost(pairs, candidate, params.threshold_px);
    if (params.record_candidates) r.candidate_costs.push_back(cost);
    if (cost < best_cost) {
      best_cost = cost;
      best = candidate;
      found = true;
      const double w = static_cast<double>(count_inliers(pairs, best, t2)) / static_cast<double>(n);
      required = required_iterations(w, params.confidence, params.max_iters);
    }
  }
  r.iterations_used = iters;
  if (!found) return fall_back();

  std::vector<Correspondence> inliers;
  for (const auto& c : pairs) {
    if (residual_sq(c, best) <= t2) inliers.push_back(c);
  }
  if (inliers.size() >= 2) {
    try {
      const RigidTransform refit = estimate_rigid(inliers);
      const double refit_cost = msac_cost(pairs, refit, params.threshold_px);
      if (refit_cost <= best_cost) {
        best = refit;
        best_cost = refit_cost;
      }
    } catch (const std::invalid_argument&) {
    }
  }
  r.transform = best;
  r.cost = best_cost;
  finalize(pairs, t2, r);
  if (r.inlier_count() < params.min_inliers) {
    const int used = r.iterations_used;
    auto candidates = std::move(r.candidate_costs);
    r = MsacResult{};
    r.iterations_used = used;
    r.candidate_costs = std::move(candidates);
    return fall_back();
  }
  return r;
}

}  // namespace md
