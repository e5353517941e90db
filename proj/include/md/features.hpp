#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "md/bits.hpp"
#include "md/imaging.hpp"
#include "md/kernels.hpp"

namespace md {

struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  double score = 0.0;
  friend bool operator==(const Keypoint&, const Keypoint&) = default;
};

struct FastParams {
  double threshold = 20.0;  // intensity units on the 0..255 scale
  int n_contiguous = 9;
  bool nonmax = true;
  int max_keypoints = 2000;  // strongest kept; <= 0 disables the cap
};

// FAST segment test on the 16-pixel radius-3 circle. A pixel is a corner when
// n_contiguous consecutive circle pixels are all brighter than p + threshold or
// all darker than p - threshold; its score is the largest sum of
// |circle - p| - threshold over a qualifying arc. Optional 3x3 non-maximum
// suppression (ties go to the earlier pixel in raster order). Output is sorted
// by descending score, then raster order.
// Throws std::invalid_argument for images smaller than 7x7 or bad parameters.
std::vector<Keypoint> detect_fast(const GrayFrame& gray, const FastParams& params = {});

struct PatternConfig {
  double center_radius = 1.5;
  std::vector<double> ring_radii{4.0, 6.0, 8.0, 11.0, 14.0, 18.0, 22.0};
  std::vector<double> field_radii{1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0};
  int fields_per_ring = 6;
  double odd_ring_offset_deg = 30.0;
};

// Retina-like sampling layout: one central field plus concentric rings of
// square receptive fields, and the 512 field pairs compared to form a descriptor.
struct RetinalPattern {
  std::vector<kernels::FieldOffset> fields;
  std::vector<kernels::FieldPair> pairs;
  std::vector<double> ring_radii;
  // Largest distance from the keypoint reached by any field box.
  double extent() const;
};

// Pairs are all field pairs (i < j) ordered by descending summed field radius
// (stable on (i, j)), truncated to 512.
RetinalPattern build_pattern(const PatternConfig& config = {});

struct BinaryDescriptor {
  Bits512 bits{};
  Keypoint keypoint;
};

// Bit j is set iff box_mean(field a_j) > box_mean(field b_j). Keypoints whose
// field boxes do not all lie inside the image are dropped.
std::vector<BinaryDescriptor> describe(const GrayFrame& gray, std::span<const Keypoint> kps,
                                       const RetinalPattern& pattern);

struct Match {
  int index_fixed = 0;
  int index_moving = 0;
  int distance = 0;
  friend bool operator==(const Match&, const Match&) = default;
};

// Mutual nearest neighbours under Hamming distance; ties go to the lowest
// index; pairs farther than max_distance are discarded. Sorted by index_fixed.
std::vector<Match> match(std::span<const BinaryDescriptor> fixed, std::span<const BinaryDescriptor> moving,
                         int max_distance = 128);

// Descriptor dump: "MDBD", u32 count, then per record f32 x, f32 y, f32 score
// and the 64 descriptor bytes (bit j in byte j / 8 at position j % 8). Little-endian.
void write_descriptors(const std::filesystem::path& path, std::span<const BinaryDescriptor> descriptors);
std::vector<BinaryDescriptor> read_descriptors(const std::filesystem::path& path);

}  // namespace md
