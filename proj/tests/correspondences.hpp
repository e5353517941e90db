#pragma once

#include <vector>

#include "md/rigid.hpp"
#include "md/rng.hpp"

namespace md::test {

struct SyntheticMatches {
  std::vector<Correspondence> pairs;
  std::vector<bool> is_inlier;
};

// Inliers: moving points uniform in [0, extent)^2 mapped through `truth` with
// isotropic Gaussian noise on the fixed side. Outliers: independent uniform
// points on both sides. Outliers are interleaved at random positions.
inline SyntheticMatches make_matches(Rng& rng, const RigidTransform& truth, int inliers, int outliers, double sigma,
                                     double extent = 224.0) {
  SyntheticMatches s;
  for (int i = 0; i < inliers; ++i) {
    const Point2 m{rng.uniform(0.0, extent), rng.uniform(0.0, extent)};
    const Point2 f = truth.apply(m);
    s.pairs.push_back({{f.x + rng.normal(0.0, sigma), f.y + rng.normal(0.0, sigma)}, m});
    s.is_inlier.push_back(true);
  }
  for (int i = 0; i < outliers; ++i) {
    const Correspondence c{{rng.uniform(0.0, extent), rng.uniform(0.0, extent)},
                           {rng.uniform(0.0, extent), rng.uniform(0.0, extent)}};
    const std::size_t at = rng.index(s.pairs.size() + 1);
    s.pairs.insert(s.pairs.begin() + static_cast<std::ptrdiff_t>(at), c);
    s.is_inlier.insert(s.is_inlier.begin() + static_cast<std::ptrdiff_t>(at), false);
  }
  return s;
}

}  // namespace md::test
