#include "md/kernels.hpp"

#include <omp.h>

#include <array>
#include <cmath>
#include <cstddef>

namespace md::kernels {
namespace {

// Bresenham circle of radius 3, clockwise from 12 o'clock.
constexpr std::array<std::array<int, 2>, 16> kCircle = {{{0, -3},
                                                          {1, -3},
                                                          {2, -2},
                                                          {3, -1},
                                                          {3, 0},
                                                          {3, 1},
                                                          {2, 2},
                                                          {1, 3},
                                                          {0, 3},
                                                          {-1, 3},
                                                          {-2, 2},
                                                          {-3, 1},
                                                          {-3, 0},
                                                          {-3, -1},
                                                          {-2, -2},
                                                          {-1, -3}}};

// Coordinates within this distance of the source domain snap onto it, so that
// rotations by multiples of 90 degrees do not lose border pixels to cos(pi/2) != 0.
constexpr double kDomainSlack = 1e-9;

inline void warp_row(const Frame& src, const RigidTransform& inv, Frame& dst, int y) {
  const int w = src.width, h = src.height, nc = src.channels;
  const double max_x = w - 1, max_y = h - 1;
  for (int x = 0; x < w; ++x) {
    const Point2 s = inv.apply({static_cast<double>(x), static_cast<double>(y)});
    double* out = &dst.data[dst.offset(x, y)];
    if (s.x < -kDomainSlack || s.y < -kDomainSlack || s.x > max_x + kDomainSlack ||
        s.y > max_y + kDomainSlack) {
      for (int c = 0; c < nc; ++c) out[c] = 0.0;
      continue;
    }
    const double sx = std::fmin(std::fmax(s.x, 0.0), max_x);
    const double sy = std::fmin(std::fmax(s.y, 0.0), max_y);
    const int x0 = static_cast<int>(std::floor(sx));
    const int y0 = static_cast<int>(std::floor(sy));
    const int x1 = x0 + 1 < w ? x0 + 1 : x0;
    const int y1 = y0 + 1 < h ? y0 + 1 : y0;
    const double fx = sx - x0, fy = sy - y0;
    const double w00 = (1.0 - fx) * (1.0 - fy), w10 = fx * (1.0 - fy);
    const double w01 = (1.0 - fx) * fy, w11 = fx * fy;
    for (int c = 0; c < nc; ++c) {
      out[c] = w00 * src.at(x0, y0, c) + w10 * src.at(x1, y0, c) + w01 * src.at(x0, y1, c) +
               w11 * src.at(x1, y1, c);
    }
  }
}

inline void nonmax_pixel(const std::vector<double>& s, int w, int h, int x, int y,
                         std::vector<std::uint8_t>& keep) {
  const std::size_t i = static_cast<std::size_t>(y) * w + x;
  const double v = s[i];
  keep[i] = 0;
  if (v <= 0.0) return;
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      if (dx == 0 && dy == 0) continue;
      const int nx = x + dx, ny = y + dy;
      if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
      const double q = s[static_cast<std::size_t>(ny) * w + nx];
      // Earlier raster neighbours win ties.
      const bool before = dy < 0 || (dy == 0 && dx < 0);
      if (before ? q >= v : q > v) return;
    }
  }
  keep[i] = 1;
}

inline double clipped_box_mean(const IntegralImage& ii, Point2 c, double r) {
  PixelBox b = square_box(c, r);
  if (b.x0 < 0) b.x0 = 0;
  if (b.y0 < 0) b.y0 = 0;
  if (b.x1 > ii.width) b.x1 = ii.width;
  if (b.y1 > ii.height) b.y1 = ii.height;
  const double area = static_cast<double>(b.x1 - b.x0) * (b.y1 - b.y0);
  return ii.rect_sum(b.x0, b.y0, b.x1, b.y1) / area;
}

inline void describe_one(const IntegralImage& ii, Point2 center, std::span<const FieldOffset> fields,
                         std::span<const FieldPair> pairs, Bits512& out) {
  std::array<double, 64> means{};
  for (std::size_t f = 0; f < fields.size(); ++f) {
    means[f] = clipped_box_mean(ii, {center.x + fields[f].dx, center.y + fields[f].dy}, fields[f].radius);
  }
  out.fill(0);
  for (std::size_t j = 0; j < pairs.size(); ++j) {
    if (means[pairs[j].a] > means[pairs[j].b]) set_bit(out, static_cast<int>(j));
  }
}

inline Nearest nearest_one(const Bits512& q, std::span<const Bits512> candidates) {
  Nearest best;
  for (std::size_t j = 0; j < candidates.size(); ++j) {
    const int d = hamming(q, candidates[j]);
    if (best.index < 0 || d < best.distance) {
      best.index = static_cast<int>(j);
      best.distance = d;
    }
  }
  return best;
}

inline double dot_row(const double* w, const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t c = 0; c < n; ++c) acc += w[c] * x[c];
  return acc;
}

constexpr std::size_t kParallelWork = 1 << 14;

}  // namespace

double fast_pixel_score(const GrayFrame& g, int x, int y, double threshold, int n_contiguous) {
  const double p = g.at(x, y);
  std::array<double, 16> d{};
  for (int k = 0; k < 16; ++k) d[k] = g.at(x + kCircle[k][0], y + kCircle[k][1]) - p;

  double best = 0.0;
  for (int sign = 1; sign >= -1; sign -= 2) {
    // Signed excess over the threshold for this polarity; positive = qualifies.
    std::array<double, 16> e{};
    int count = 0, start = -1;
    for (int k = 0; k < 16; ++k) {
      e[k] = sign * d[k] - threshold;
      if (e[k] > 0.0) {
        ++count;
      } else if (start < 0) {
        start = k;
      }
    }
    if (count < n_contiguous) continue;
    if (start < 0) {  // whole circle qualifies
      double sum = 0.0;
      for (double v : e) sum += v;
      if (sum > best) best = sum;
      continue;
    }
    int run = 0;
    double sum = 0.0;
    for (int i = 1; i <= 16; ++i) {
      const int k = (start + i) % 16;
      if (e[k] > 0.0) {
        ++run;
        sum += e[k];
      } else {
        if (run >= n_contiguous && sum > best) best = sum;
        run = 0;
        sum = 0.0;
      }
    }
  }
  return best;
}

namespace serial {

void warp_rigid(const Frame& src, const RigidTransform& inverse, Frame& dst) {
  for (int y = 0; y < src.height; ++y) warp_row(src, inverse, dst, y);
}

void fast_score_map(const GrayFrame& g, double threshold, int n_contiguous, std::vector<double>& scores) {
  scores.assign(static_cast<std::size_t>(g.width) * g.height, 0.0);
  for (int y = 3; y < g.height - 3; ++y) {
    for (int x = 3; x < g.width - 3; ++x) {
      scores[static_cast<std::size_t>(y) * g.width + x] = fast_pixel_score(g, x, y, threshold, n_contiguous);
    }
  }
}

void nonmax_3x3(const std::vector<double>& scores, int w, int h, std::vector<std::uint8_t>& keep) {
  keep.assign(scores.size(), 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) nonmax_pixel(scores, w, h, x, y, keep);
  }
}

void describe(const IntegralImage& ii, std::span<const Point2> centers, std::span<const FieldOffset> fields,
              std::span<const FieldPair> pairs, std::vector<Bits512>& out) {
  out.resize(centers.size());
  for (std::size_t i = 0; i < centers.size(); ++i) describe_one(ii, centers[i], fields, pairs, out[i]);
}

void nearest(std::span<const Bits512> queries, std::span<const Bits512> candidates, std::vector<Nearest>& out) {
  out.resize(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) out[i] = nearest_one(queries[i], candidates);
}

void affine(std::span<const double> w, std::span<const double> b, std::span<const double> x, std::span<double> y) {
  const std::size_t cols = x.size();
  for (std::size_t r = 0; r < y.size(); ++r) y[r] = b[r] + dot_row(&w[r * cols], x.data(), cols);
}

void outer_accumulate(std::span<const double> d, std::span<const double> x, std::span<double> g) {
  const std::size_t cols = x.size();
  for (std::size_t r = 0; r < d.size(); ++r) {
    double* row = &g[r * cols];
    for (std::size_t c = 0; c < cols; ++c) row[c] += d[r] * x[c];
  }
}

void transposed_accumulate(std::span<const double> w, std::span<const double> d, std::span<double> dx) {
  const std::size_t cols = dx.size();
  for (std::size_t c = 0; c < cols; ++c) {
    double acc = 0.0;
    for (std::size_t r = 0; r < d.size(); ++r) acc += w[r * cols + c] * d[r];
    dx[c] += acc;
  }
}

}  // namespace serial

namespace parallel {

void warp_rigid(const Frame& src, const RigidTransform& inverse, Frame& dst) {
  const int h = src.height;
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) warp_row(src, inverse, dst, y);
}

void fast_score_map(const GrayFrame& g, double threshold, int n_contiguous, std::vector<double>& scores) {
  scores.assign(static_cast<std::size_t>(g.width) * g.height, 0.0);
  const int h = g.height, w = g.width;
#pragma omp parallel for schedule(static)
  for (int y = 3; y < h - 3; ++y) {
    for (int x = 3; x < w - 3; ++x) {
      scores[static_cast<std::size_t>(y) * w + x] = fast_pixel_score(g, x, y, threshold, n_contiguous);
    }
  }
}

void nonmax_3x3(const std::vector<double>& scores, int w, int h, std::vector<std::uint8_t>& keep) {
  keep.assign(scores.size(), 0);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) nonmax_pixel(scores, w, h, x, y, keep);
  }
}

void describe(const IntegralImage& ii, std::span<const Point2> centers, std::span<const FieldOffset> fields,
              std::span<const FieldPair> pairs, std::vector<Bits512>& out) {
  out.resize(centers.size());
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(centers.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) describe_one(ii, centers[i], fields, pairs, out[i]);
}

void nearest(std::span<const Bits512> queries, std::span<const Bits512> candidates, std::vector<Nearest>& out) {
  out.resize(queries.size());
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(queries.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = nearest_one(queries[i], candidates);
}

void affine(std::span<const double> w, std::span<const double> b, std::span<const double> x, std::span<double> y) {
  const std::size_t cols = x.size();
  const std::ptrdiff_t rows = static_cast<std::ptrdiff_t>(y.size());
#pragma omp parallel for schedule(static) if (y.size() * cols >= kParallelWork)
  for (std::ptrdiff_t r = 0; r < rows; ++r) y[r] = b[r] + dot_row(&w[r * cols], x.data(), cols);
}

void outer_accumulate(std::span<const double> d, std::span<const double> x, std::span<double> g) {
  const std::size_t cols = x.size();
  const std::ptrdiff_t rows = static_cast<std::ptrdiff_t>(d.size());
#pragma omp parallel for schedule(static) if (d.size() * cols >= kParallelWork)
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    double* row = &g[r * cols];
    for (std::size_t c = 0; c < cols; ++c) row[c] += d[r] * x[c];
  }
}

void transposed_accumulate(std::span<const double> w, std::span<const double> d, std::span<double> dx) {
  const std::ptrdiff_t cols = static_cast<std::ptrdiff_t>(dx.size());
  const std::size_t rows = d.size();
#pragma omp parallel for schedule(static) if (rows * dx.size() >= kParallelWork)
  for (std::ptrdiff_t c = 0; c < cols; ++c) {
    double acc = 0.0;
    for (std::size_t r = 0; r < rows; ++r) acc += w[r * cols + c] * d[r];
    dx[c] += acc;
  }
}

}  // namespace parallel

void set_worker_count(int n) {
  if (n > 0) omp_set_num_threads(n);
}

}  // namespace md::kernels
