#include "md/distill.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "md/image_io.hpp"
#include "md/rng.hpp"

namespace fs = std::filesystem;

namespace md {
namespace {

// Running mean after the k-th sample (k >= 1). Constant inputs stay exact,
// which a sum-then-divide would not guarantee for non-integer samples.
void accumulate_mean(Frame& mean, const Frame& sample, std::size_t k) {
  const double dk = static_cast<double>(k);
  for (std::size_t j = 0; j < mean.data.size(); ++j) mean.data[j] += (sample.data[j] - mean.data[j]) / dk;
}

}  // namespace

void PipelineConfig::validate() const {
  if (segment_length < 1) throw std::invalid_argument("pipeline: segment_length must be >= 1");
  if (alphas.empty()) throw std::invalid_argument("pipeline: alphas must be nonempty");
  for (double a : alphas) {
    if (!std::isfinite(a)) throw std::invalid_argument("pipeline: alphas must be finite");
  }
  if (max_match_distance < 0) throw std::invalid_argument("pipeline: max_match_distance must be >= 0");
}

std::vector<Segment> segment_video(std::span<const Frame> frames, int segment_length, const std::string& video_id) {
  if (frames.empty()) throw std::invalid_argument("segment_video: empty video");
  if (segment_length < 1) throw std::invalid_argument("segment_video: segment length must be >= 1");
  const std::size_t n = static_cast<std::size_t>(segment_length);
  std::vector<Segment> segs;
  for (std::size_t start = 0; start < frames.size(); start += n) {
    const std::size_t end = std::min(start + n, frames.size());
    const std::size_t len = end - start;
    if (len < n && !segs.empty() && 2 * len < n) {
      auto& last = segs.back().frames;
      last.insert(last.end(), frames.begin() + static_cast<std::ptrdiff_t>(start), frames.end());
      break;
    }
    Segment s;
    s.frames.assign(frames.begin() + static_cast<std::ptrdiff_t>(start), frames.begin() + static_cast<std::ptrdiff_t>(end));
    s.index = static_cast<int>(segs.size());
    s.video_id = video_id;
    s.remainder = len < n;
    segs.push_back(std::move(s));
  }
  return segs;
}

FrameFeatures compute_features(const Frame& frame, const PipelineConfig& cfg, const RetinalPattern& pattern) {
  FrameFeatures f;
  const GrayFrame gray = to_grayscale(frame);
  if (gray.width < 7 || gray.height < 7) return f;
  f.keypoints = detect_fast(gray, cfg.fast);
  f.descriptors = describe(gray, f.keypoints, pattern);
  return f;
}

PairMotion estimate_pair_motion(const FrameFeatures& fixed, const FrameFeatures& moving, const PipelineConfig& cfg,
                                std::uint64_t seed) {
  PairMotion pm;
  const auto matches = match(fixed.descriptors, moving.descriptors, cfg.max_match_distance);
  pm.matches = static_cast<int>(matches.size());
  std::vector<Correspondence> pairs;
  pairs.reserve(matches.size());
  for (const auto& m : matches) {
    const Keypoint& kf = fixed.descriptors[static_cast<std::size_t>(m.index_fixed)].keypoint;
    const Keypoint& km = moving.descriptors[static_cast<std::size_t>(m.index_moving)].keypoint;
    pairs.push_back({{kf.x, kf.y}, {km.x, km.y}});
  }
  MsacParams mp = cfg.msac;
  mp.seed = seed;
  const MsacResult r = estimate_msac(pairs, mp);
  pm.transform = r.transform;
  pm.inliers = r.fallback ? 0 : r.inlier_count();
  pm.fallback = r.fallback;
  return pm;
}

SpatioTemporalImage distill_segment(const Segment& seg, const PipelineConfig& cfg) {
  return distill_segment(seg, cfg, build_pattern(cfg.pattern));
}

SpatioTemporalImage distill_segment(const Segment& seg, const PipelineConfig& cfg, const RetinalPattern& pattern) {
  if (seg.frames.empty()) throw std::invalid_argument("distill_segment: empty segment");
  const std::size_t n = seg.frames.size();
  const Frame& ref = seg.frames.front();
  for (const auto& f : seg.frames) {
    if (!f.same_shape(ref)) throw std::invalid_argument("distill_segment: frames differ in shape");
  }

  std::vector<FrameFeatures> feats(n);
  if (n > 1) {
    const std::ptrdiff_t count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < count; ++i) feats[i] = compute_features(seg.frames[i], cfg, pattern);
  }

  std::vector<PairMotion> steps(n);
  {
    const std::ptrdiff_t count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 1; i < count; ++i) {
      steps[i] = estimate_pair_motion(feats[i - 1], feats[i], cfg,
                                      derive_seed(cfg.seed, static_cast<std::uint64_t>(seg.index),
                                                  static_cast<std::uint64_t>(i)));
    }
  }

  SpatioTemporalImage out;
  out.mode = EncodeMode::accumulated;
  out.segment_index = seg.index;
  out.image = Frame(ref.width, ref.height, ref.channels, 0.0, ref.index);
  RigidTransform cumulative;
  for (std::size_t i = 0; i < n; ++i) {
    FrameDiagnostics d;
    d.frame = static_cast<int>(i);
    d.keypoints = static_cast<int>(feats[i].keypoints.size());
    if (i > 0) {
      cumulative = compose(cumulative, steps[i].transform);
      d.matches = steps[i].matches;
      d.inliers = steps[i].inliers;
      d.fallback = steps[i].fallback;
      d.step = steps[i].transform;
    }
    d.cumulative = cumulative;
    out.diagnostics.push_back(d);

    accumulate_mean(out.image, warp_rigid(seg.frames[i], cumulative), i + 1);
  }
  clamp_samples(out.image);
  return out;
}

SpatioTemporalImage average_segment(const Segment& seg) {
  if (seg.frames.empty()) throw std::invalid_argument("average_segment: empty segment");
  const Frame& ref = seg.frames.front();
  SpatioTemporalImage out;
  out.mode = EncodeMode::averaged;
  out.segment_index = seg.index;
  out.image = Frame(ref.width, ref.height, ref.channels, 0.0, ref.index);
  for (std::size_t i = 0; i < seg.frames.size(); ++i) {
    if (!seg.frames[i].same_shape(ref)) throw std::invalid_argument("average_segment: frames differ in shape");
    accumulate_mean(out.image, seg.frames[i], i + 1);
  }
  clamp_samples(out.image);
  for (std::size_t i = 0; i < seg.frames.size(); ++i) {
    FrameDiagnostics d;
    d.frame = static_cast<int>(i);
    out.diagnostics.push_back(d);
  }
  return out;
}

Frame alpha_blend(const Frame& p1, const Frame& p2, double alpha) {
  if (!p1.same_shape(p2)) throw std::invalid_argument("alpha_blend: frame shapes differ");
  Frame out(p1.width, p1.height, p1.channels, 0.0, p1.index);
  const double beta = 1.0 - alpha;
  for (std::size_t k = 0; k < out.data.size(); ++k) {
    out.data[k] = std::clamp(alpha * p1.data[k] + beta * p2.data[k], 0.0, 255.0);
  }
  return out;
}

std::string synthetic_label(int rank) { return "synt" + std::to_string(rank + 1); }

std::vector<std::string> SyntheticSets::subsets() const {
  std::vector<std::string> labels{kOriginalSubset};
  for (const auto& s : synthetic) {
    if (std::find(labels.begin(), labels.end(), s.subset) == labels.end()) labels.push_back(s.subset);
  }
  return labels;
}

SyntheticSets generate_synthetic_sets(std::span<const Frame> frames, const PipelineConfig& cfg,
                                      const std::string& video_id) {
  cfg.validate();
  std::vector<double> alphas = cfg.alphas;
  std::stable_sort(alphas.begin(), alphas.end());
  const RetinalPattern pattern = build_pattern(cfg.pattern);

  SyntheticSets sets;
  sets.video_id = video_id;
  for (const Segment& seg : segment_video(frames, cfg.segment_length, video_id)) {
    SpatioTemporalImage st = distill_segment(seg, cfg, pattern);
    const Frame& still = seg.frames.front();
    for (std::size_t k = 0; k < alphas.size(); ++k) {
      SyntheticImage syn;
      syn.image = cfg.swap_blend_roles ? alpha_blend(still, st.image, alphas[k]) : alpha_blend(st.image, still, alphas[k]);
      syn.alpha = alphas[k];
      syn.segment_index = seg.index;
      syn.subset = synthetic_label(static_cast<int>(k));
      sets.synthetic.push_back(std::move(syn));
    }
    sets.original.push_back(std::move(st));
  }
  return sets;
}

fs::path segment_file_name(int segment_index) {
  char name[32];
  std::snprintf(name, sizeof name, "seg_%04d.png", segment_index);
  return name;
}

std::string distillation_report(const SyntheticSets& sets) {
  std::ostringstream os;
  os << "video=" << sets.video_id << '\n';
  os << "segments=" << sets.original.size() << '\n';
  for (const auto& st : sets.original) {
    int matches = 0, inliers = 0, fallbacks = 0;
    for (const auto& d : st.diagnostics) {
      if (d.frame == 0) continue;
      matches += d.matches;
      inliers += d.inliers;
      fallbacks += d.fallback ? 1 : 0;
    }
    os << "segment=" << st.segment_index << " frames=" << st.diagnostics.size() << " matches=" << matches
       << " inliers=" << inliers << " fallback=" << fallbacks << '\n';
    for (const auto& d : st.diagnostics) {
      if (d.frame == 0) continue;
      char buf[160];
      std::snprintf(buf, sizeof buf, " angle=%.9f tx=%.6f ty=%.6f", d.step.angle(), d.step.tx(), d.step.ty());
      os << "segment=" << st.segment_index << " frame=" << d.frame << " keypoints=" << d.keypoints
         << " matches=" << d.matches << " inliers=" << d.inliers << " fallback=" << (d.fallback ? 1 : 0) << buf
         << '\n';
    }
  }
  return os.str();
}

void export_synthetic_sets(const fs::path& root, const SyntheticSets& sets) {
  const fs::path vdir = root / sets.video_id;
  fs::create_directories(vdir / kOriginalSubset);
  for (const auto& st : sets.original) write_png(vdir / kOriginalSubset / segment_file_name(st.segment_index), st.image);
  for (const auto& syn : sets.synthetic) {
    fs::create_directories(vdir / syn.subset);
    write_png(vdir / syn.subset / segment_file_name(syn.segment_index), syn.image);
  }
  std::ofstream rep(vdir / "distill_report.txt");
  rep << distillation_report(sets);
  if (!rep) throw std::runtime_error((vdir / "distill_report.txt").string() + ": write failed");
}

}  // namespace md
