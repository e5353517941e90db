#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "md/features.hpp"
#include "md/imaging.hpp"
#include "md/msac.hpp"
#include "md/rigid.hpp"

namespace md {

struct PipelineConfig {
  int segment_length = 40;
  std::vector<double> alphas{0.5, 1.0, 1.5};
  // false: alpha weights the spatiotemporal image and (1 - alpha) the still frame.
  bool swap_blend_roles = false;
  FastParams fast;
  PatternConfig pattern;
  int max_match_distance = 128;
  MsacParams msac;
  std::uint64_t seed = 0;

  void validate() const;  // throws std::invalid_argument
};

struct Segment {
  std::vector<Frame> frames;
  int index = 0;
  std::string video_id;
  bool remainder = false;  // shorter trailing chunk kept as its own segment
};

// Consecutive non-overlapping chunks of N frames. A trailing remainder of at
// least N/2 frames becomes its own (flagged) segment; a shorter one is merged
// into the previous segment. Throws std::invalid_argument on empty input.
std::vector<Segment> segment_video(std::span<const Frame> frames, int segment_length,
                                   const std::string& video_id = {});

// Detector + descriptor output for one frame.
struct FrameFeatures {
  std::vector<Keypoint> keypoints;
  std::vector<BinaryDescriptor> descriptors;
};
FrameFeatures compute_features(const Frame& frame, const PipelineConfig& cfg, const RetinalPattern& pattern);

struct PairMotion {
  RigidTransform transform;  // moving -> fixed
  int matches = 0;
  int inliers = 0;
  bool fallback = false;
};
PairMotion estimate_pair_motion(const FrameFeatures& fixed, const FrameFeatures& moving, const PipelineConfig& cfg,
                                std::uint64_t seed);

struct FrameDiagnostics {
  int frame = 0;  // position within the segment, 0-based; frame 0 is the reference
  int keypoints = 0;
  int matches = 0;
  int inliers = 0;
  bool fallback = false;
  RigidTransform step;        // this frame -> previous frame
  RigidTransform cumulative;  // this frame -> reference frame
};

enum class EncodeMode { accumulated, averaged };

struct SpatioTemporalImage {
  Frame image;
  EncodeMode mode = EncodeMode::accumulated;
  int segment_index = 0;
  std::vector<FrameDiagnostics> diagnostics;
};

// Motion-compensated average: frame 0 is the reference, each later frame is
// aligned by the cumulative product of the per-pair rigid estimates and the
// warped frames are averaged.
SpatioTemporalImage distill_segment(const Segment& seg, const PipelineConfig& cfg);
SpatioTemporalImage distill_segment(const Segment& seg, const PipelineConfig& cfg, const RetinalPattern& pattern);

// Plain temporal mean, no alignment.
SpatioTemporalImage average_segment(const Segment& seg);

// alpha * p1 + (1 - alpha) * p2 per sample, clamped to [0, 255].
// Throws std::invalid_argument on shape mismatch.
Frame alpha_blend(const Frame& p1, const Frame& p2, double alpha);

struct SyntheticImage {
  Frame image;
  double alpha = 0.0;
  int segment_index = 0;
  std::string subset;  // "synt1", "synt2", ... in ascending alpha order
};

struct SyntheticSets {
  std::string video_id;
  std::vector<SpatioTemporalImage> original;
  std::vector<SyntheticImage> synthetic;
  std::vector<std::string> subsets() const;  // "original" then the synt labels
};

inline constexpr const char* kOriginalSubset = "original";
std::string synthetic_label(int rank);  // 0 -> "synt1"

// Segment, distill each segment once, then blend it with the segment's first
// frame at every configured alpha.
SyntheticSets generate_synthetic_sets(std::span<const Frame> frames, const PipelineConfig& cfg,
                                      const std::string& video_id);

// Writes <root>/<video>/<subset>/seg_%04d.png and <root>/<video>/distill_report.txt.
void export_synthetic_sets(const std::filesystem::path& root, const SyntheticSets& sets);
std::string distillation_report(const SyntheticSets& sets);

std::filesystem::path segment_file_name(int segment_index);

}  // namespace md
