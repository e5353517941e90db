#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "md/imaging.hpp"
#include "md/rigid.hpp"
#include "md/rng.hpp"

namespace md::test {

inline Frame random_int_frame(Rng& rng, int w, int h, int c = 1) {
  Frame f(w, h, c);
  for (double& v : f.data) v = static_cast<double>(rng.index(256));
  return f;
}

inline Frame random_real_frame(Rng& rng, int w, int h, int c = 1) {
  Frame f(w, h, c);
  for (double& v : f.data) v = rng.uniform(0.0, 255.0);
  return f;
}

inline GrayFrame random_int_gray(Rng& rng, int w, int h) {
  GrayFrame g(w, h);
  for (double& v : g.data) v = static_cast<double>(rng.index(256));
  return g;
}

// Piecewise-constant blocky image: integer values, many strong corners.
inline GrayFrame blocky_gray(Rng& rng, int w, int h, int block) {
  GrayFrame g(w, h);
  const int bw = (w + block - 1) / block, bh = (h + block - 1) / block;
  std::vector<double> vals(static_cast<std::size_t>(bw) * bh);
  for (double& v : vals) v = static_cast<double>(rng.index(256));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) g.at(x, y) = vals[static_cast<std::size_t>(y / block) * bw + x / block];
  return g;
}

inline RigidTransform random_rigid(Rng& rng, double max_t = 100.0) {
  return {rng.uniform(-std::numbers::pi, std::numbers::pi), rng.uniform(-max_t, max_t), rng.uniform(-max_t, max_t)};
}

inline bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

}  // namespace md::test
