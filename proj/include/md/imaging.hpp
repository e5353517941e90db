#pragma once

#include <cstddef>
#include <vector>

#include "md/rigid.hpp"

namespace md {

// Row-major, channel-interleaved raster with real-valued samples in [0, 255].
struct Frame {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<double> data;
  int index = 0;  // ordinal position in the source video

  Frame() = default;
  Frame(int w, int h, int c, double fill = 0.0, int idx = 0);

  std::size_t size() const { return data.size(); }
  std::size_t offset(int x, int y, int c = 0) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  double& at(int x, int y, int c = 0) { return data[offset(x, y, c)]; }
  double at(int x, int y, int c = 0) const { return data[offset(x, y, c)]; }

  bool same_shape(const Frame& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
};

// Exact sample-wise equality (shape and data; the index field is ignored).
bool operator==(const Frame& a, const Frame& b);

struct GrayFrame {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  GrayFrame() = default;
  GrayFrame(int w, int h, double fill = 0.0);

  double& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
};

// (width+1) x (height+1) table; entry (x, y) is the sum over [0, x) x [0, y).
struct IntegralImage {
  int width = 0;   // source image width
  int height = 0;  // source image height
  std::vector<double> table;

  double at(int x, int y) const { return table[static_cast<std::size_t>(y) * (width + 1) + x]; }
  // Sum over the half-open pixel rectangle [x0, x1) x [y0, y1); bounds must be in range.
  double rect_sum(int x0, int y0, int x1, int y1) const {
    return at(x1, y1) - at(x0, y1) - at(x1, y0) + at(x0, y0);
  }
};

// Pixel rectangle [x0, x1) x [y0, y1) covered by the square of side 2*radius
// centred at (cx, cy), before clipping. Pixel i spans [i - 0.5, i + 0.5).
struct PixelBox {
  int x0, y0, x1, y1;
};
PixelBox square_box(Point2 center, double radius);

GrayFrame to_grayscale(const Frame& frame);
Frame to_frame(const GrayFrame& gray, int index = 0);

// output(p) = bilinear sample of frame at t^-1(p); samples outside the source
// domain are 0 (black border).
Frame warp_rigid(const Frame& frame, const RigidTransform& t);

IntegralImage integral(const GrayFrame& gray);

// Mean of the square of side 2*radius around `center`, clipped to the image.
// Throws std::invalid_argument for radius < 0.5 or a box entirely off-image.
double box_mean(const IntegralImage& ii, Point2 center, double radius);

// Bilinear resize onto a (w, h) grid with pixel-centre alignment. Same-size
// input is returned unchanged.
Frame resize_bilinear(const Frame& frame, int w, int h);

// Clamp every sample into [0, 255].
void clamp_samples(Frame& frame);

// Peak signal-to-noise ratio (peak 255) over the rectangle that excludes
// `margin` pixels on each side. Identical inputs give +infinity.
double psnr(const Frame& a, const Frame& b, int margin = 0);

}  // namespace md
