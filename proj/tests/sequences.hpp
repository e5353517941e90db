#pragma once

#include <string>
#include <vector>

#include "md/rng.hpp"
#include "md/stacking.hpp"

namespace md::test {

// Class-dependent constant offset plus unit noise; labels alternate.
inline std::vector<FeatureSequence> offset_sequences(int n, int dim, int steps, double offset, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<FeatureSequence> out;
  for (int i = 0; i < n; ++i) {
    FeatureSequence s;
    s.video_id = "s" + std::to_string(i);
    s.label = i % 2;
    s.subset = "x";
    const double shift = s.label ? offset : -offset;
    for (int t = 0; t < steps; ++t) {
      std::vector<double> x(static_cast<std::size_t>(dim));
      for (double& v : x) v = shift + rng.normal();
      s.steps.push_back(x);
    }
    out.push_back(std::move(s));
  }
  return out;
}

// Videos split into three groups. Subset synt(b+1) carries the label only for
// group b (offset +-2 plus noise); for the other groups it is label-free noise
// around a distinct level, so each expert is right on its own third only.
inline std::vector<VideoFeatures> complementary_videos(int n, int dim, int steps, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<VideoFeatures> out;
  for (int i = 0; i < n; ++i) {
    VideoFeatures v;
    v.video_id = "c" + std::to_string(seed) + "_" + std::to_string(i);
    v.label = (i / 3) % 2;
    const int group = i % 3;
    for (int b = 0; b < 3; ++b) {
      Steps s;
      for (int t = 0; t < steps; ++t) {
        std::vector<double> x(static_cast<std::size_t>(dim));
        for (std::size_t k = 0; k < x.size(); ++k) {
          const double noise = 0.5 * rng.normal();
          x[k] = group == b ? (v.label ? 2.0 : -2.0) + noise : (k == 0 ? 4.0 : 0.0) + noise;
        }
        s.push_back(x);
      }
      v.subsets["synt" + std::to_string(b + 1)] = s;
    }
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace md::test
