#pragma once

#include <cstdint>
#include <vector>

#include "md/imaging.hpp"
#include "md/rigid.hpp"

namespace md {

// Procedural test scene: flat background with painted axis-aligned rectangles
// in scene coordinates. Rendering is area-weighted (exact pixel coverage) for
// pure translations and 4x4 supersampled otherwise, so sub-pixel camera motion
// produces smoothly varying frames.
class Scene {
public:
  struct Rect {
    double x0, y0, x1, y1;
    double value;
    bool local = false;  // follows the local motion offset instead of the scene
  };

  Scene() = default;
  // Random scene covering [-margin, w + margin) x [-margin, h + margin).
  static Scene random(std::uint64_t seed, int width, int height, int rect_count, double margin = 40.0);

  void add(const Rect& r) { rects_.push_back(r); }
  void set_background(double v) { background_ = v; }
  const std::vector<Rect>& rects() const { return rects_; }

  // Image pixel p shows scene point camera^-1(p); local rectangles are first
  // shifted by `local_offset` in scene coordinates.
  Frame render(int width, int height, const RigidTransform& camera, Point2 local_offset = {}) const;

private:
  double background_ = 128.0;
  std::vector<Rect> rects_;
};

// A scripted clip: frame i is rendered with camera = translation(i * drift)
// composed with rotation(i * spin) about the image centre; local rectangles
// oscillate with the given amplitude and period (frames).
struct ClipScript {
  Point2 drift{0.5, 0.0};
  double spin = 0.0;
  double local_amplitude = 0.0;
  double local_period = 8.0;
};
std::vector<Frame> render_clip(const Scene& scene, int width, int height, int frames, const ClipScript& script);
RigidTransform clip_camera(const ClipScript& script, int width, int height, int frame);

}  // namespace md
