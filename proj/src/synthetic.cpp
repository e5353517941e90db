#include "md/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "md/rng.hpp"

namespace md {
namespace {

double overlap(double a0, double a1, double b0, double b1) { return std::max(0.0, std::min(a1, b1) - std::max(a0, b0)); }

}  // namespace

Scene Scene::random(std::uint64_t seed, int width, int height, int rect_count, double margin) {
  Rng rng(seed);
  Scene s;
  s.background_ = rng.uniform(90.0, 160.0);
  for (int i = 0; i < rect_count; ++i) {
    const double w = rng.uniform(5.0, 28.0), h = rng.uniform(5.0, 28.0);
    const double x = rng.uniform(-margin, width + margin - w);
    const double y = rng.uniform(-margin, height + margin - h);
    s.rects_.push_back({x, y, x + w, y + h, rng.uniform(10.0, 245.0), false});
  }
  return s;
}

Frame Scene::render(int width, int height, const RigidTransform& camera, Point2 local_offset) const {
  Frame f(width, height, 1, background_);
  const RigidTransform inv = invert(camera);
  const bool translation_only = inv.angle() == 0.0;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double v = background_;
      if (translation_only) {
        const Point2 c = inv.apply({double(x), double(y)});
        for (const Rect& r : rects_) {
          const double ox = r.local ? local_offset.x : 0.0, oy = r.local ? local_offset.y : 0.0;
          const double cov = overlap(c.x - 0.5, c.x + 0.5, r.x0 + ox, r.x1 + ox) *
                             overlap(c.y - 0.5, c.y + 0.5, r.y0 + oy, r.y1 + oy);
          if (cov > 0.0) v = v * (1.0 - cov) + r.value * cov;
        }
      } else {
        double acc = 0.0;
        for (int sy = 0; sy < 4; ++sy) {
          for (int sx = 0; sx < 4; ++sx) {
            const Point2 c = inv.apply({x - 0.375 + 0.25 * sx, y - 0.375 + 0.25 * sy});
            double s = background_;
            for (const Rect& r : rects_) {
              const double ox = r.local ? local_offset.x : 0.0, oy = r.local ? local_offset.y : 0.0;
              if (c.x >= r.x0 + ox && c.x < r.x1 + ox && c.y >= r.y0 + oy && c.y < r.y1 + oy) s = r.value;
            }
            acc += s;
          }
        }
        v = acc / 16.0;
      }
      f.at(x, y) = std::clamp(v, 0.0, 255.0);
    }
  }
  return f;
}

RigidTransform clip_camera(const ClipScript& script, int width, int height, int frame) {
  const RigidTransform spin =
      RigidTransform::rotation_about(frame * script.spin, {(width - 1) / 2.0, (height - 1) / 2.0});
  return compose(RigidTransform::translation(frame * script.drift.x, frame * script.drift.y), spin);
}

std::vector<Frame> render_clip(const Scene& scene, int width, int height, int frames, const ClipScript& script) {
  std::vector<Frame> out(static_cast<std::size_t>(frames));
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < frames; ++i) {
    const double phase = 2.0 * std::numbers::pi * i / script.local_period;
    const Point2 local{script.local_amplitude * std::sin(phase), script.local_amplitude * std::cos(phase) * 0.5};
    out[static_cast<std::size_t>(i)] = scene.render(width, height, clip_camera(script, width, height, i), local);
    out[static_cast<std::size_t>(i)].index = i;
  }
  return out;
}

}  // namespace md
