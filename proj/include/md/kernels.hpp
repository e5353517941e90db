#pragma once

// Data-parallel inner loops. Every kernel exists twice: a plain serial
// reference and an OpenMP version with the same per-element arithmetic, so the
// two agree bit-for-bit regardless of thread count. Library code calls the
// parallel variants; tests and bench/ compare them against the serial ones.

#include <cstdint>
#include <span>
#include <vector>

#include "md/bits.hpp"
#include "md/imaging.hpp"
#include "md/rigid.hpp"

namespace md::kernels {

// Best partner for one query descriptor: lowest Hamming distance, ties to the
// lowest candidate index. index = -1 when the candidate list is empty.
struct Nearest {
  int index = -1;
  int distance = 0;
};

// Box geometry of one receptive field relative to a keypoint.
struct FieldOffset {
  double dx, dy, radius;
};
struct FieldPair {
  int a, b;
};

// FAST segment-test score at (x, y); 0 when the pixel is not a corner.
// (x, y) must have the full radius-3 circle in bounds.
double fast_pixel_score(const GrayFrame& g, int x, int y, double threshold, int n_contiguous);

namespace serial {
void warp_rigid(const Frame& src, const RigidTransform& inverse, Frame& dst);
void fast_score_map(const GrayFrame& g, double threshold, int n_contiguous, std::vector<double>& scores);
void nonmax_3x3(const std::vector<double>& scores, int w, int h, std::vector<std::uint8_t>& keep);
void describe(const IntegralImage& ii, std::span<const Point2> centers, std::span<const FieldOffset> fields,
              std::span<const FieldPair> pairs, std::vector<Bits512>& out);
void nearest(std::span<const Bits512> queries, std::span<const Bits512> candidates, std::vector<Nearest>& out);
// y = W x + b, W row-major rows x cols.
void affine(std::span<const double> w, std::span<const double> b, std::span<const double> x, std::span<double> y);
// G += d x^T
void outer_accumulate(std::span<const double> d, std::span<const double> x, std::span<double> g);
// dx += W^T d
void transposed_accumulate(std::span<const double> w, std::span<const double> d, std::span<double> dx);
}  // namespace serial

namespace parallel {
void warp_rigid(const Frame& src, const RigidTransform& inverse, Frame& dst);
void fast_score_map(const GrayFrame& g, double threshold, int n_contiguous, std::vector<double>& scores);
void nonmax_3x3(const std::vector<double>& scores, int w, int h, std::vector<std::uint8_t>& keep);
void describe(const IntegralImage& ii, std::span<const Point2> centers, std::span<const FieldOffset> fields,
              std::span<const FieldPair> pairs, std::vector<Bits512>& out);
void nearest(std::span<const Bits512> queries, std::span<const Bits512> candidates, std::vector<Nearest>& out);
void affine(std::span<const double> w, std::span<const double> b, std::span<const double> x, std::span<double> y);
void outer_accumulate(std::span<const double> d, std::span<const double> x, std::span<double> g);
void transposed_accumulate(std::span<const double> w, std::span<const double> d, std::span<double> dx);
}  // namespace parallel

// Sets the OpenMP worker count used by the parallel kernels (n <= 0 keeps the default).
void set_worker_count(int n);

}  // namespace md::kernels
