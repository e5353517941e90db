#include "md/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "md/kernels.hpp"

namespace md {

Frame::Frame(int w, int h, int c, double fill, int idx) : width(w), height(h), channels(c), index(idx) {
  if (w < 0 || h < 0) throw std::invalid_argument("Frame: negative dimensions");
  if (c != 1 && c != 3) throw std::invalid_argument("Frame: channels must be 1 or 3");
  data.assign(static_cast<std::size_t>(w) * h * c, fill);
}

bool operator==(const Frame& a, const Frame& b) { return a.same_shape(b) && a.data == b.data; }

GrayFrame::GrayFrame(int w, int h, double fill) : width(w), height(h) {
  if (w < 0 || h < 0) throw std::invalid_argument("GrayFrame: negative dimensions");
  data.assign(static_cast<std::size_t>(w) * h, fill);
}

GrayFrame to_grayscale(const Frame& frame) {
  GrayFrame g(frame.width, frame.height);
  if (frame.channels == 1) {
    g.data = frame.data;
    return g;
  }
  const std::size_t n = g.data.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double* px = &frame.data[3 * i];
    g.data[i] = std::clamp(0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2], 0.0, 255.0);
  }
  return g;
}

Frame to_frame(const GrayFrame& gray, int index) {
  Frame f(gray.width, gray.height, 1, 0.0, index);
  f.data = gray.data;
  return f;
}

Frame warp_rigid(const Frame& frame, const RigidTransform& t) {
  Frame out(frame.width, frame.height, frame.channels, 0.0, frame.index);
  kernels::parallel::warp_rigid(frame, invert(t), out);
  return out;
}

IntegralImage integral(const GrayFrame& gray) {
  IntegralImage ii;
  ii.width = gray.width;
  ii.height = gray.height;
  const int stride = gray.width + 1;
  ii.table.assign(static_cast<std::size_t>(stride) * (gray.height + 1), 0.0);
  for (int y = 0; y < gray.height; ++y) {
    double row = 0.0;
    for (int x = 0; x < gray.width; ++x) {
      row += gray.at(x, y);
      ii.table[static_cast<std::size_t>(y + 1) * stride + x + 1] =
          ii.table[static_cast<std::size_t>(y) * stride + x + 1] + row;
    }
  }
  return ii;
}

PixelBox square_box(Point2 c, double r) {
  return {static_cast<int>(std::floor(c.x - r + 0.5)), static_cast<int>(std::floor(c.y - r + 0.5)),
          static_cast<int>(std::floor(c.x + r + 0.5)), static_cast<int>(std::floor(c.y + r + 0.5))};
}

double box_mean(const IntegralImage& ii, Point2 center, double radius) {
  if (!(radius >= 0.5)) throw std::invalid_argument("box_mean: radius must be >= 0.5");
  PixelBox b = square_box(center, radius);
  b.x0 = std::max(b.x0, 0);
  b.y0 = std::max(b.y0, 0);
  b.x1 = std::min(b.x1, ii.width);
  b.y1 = std::min(b.y1, ii.height);
  if (b.x1 <= b.x0 || b.y1 <= b.y0) throw std::invalid_argument("box_mean: box lies entirely off-image");
  const double area = static_cast<double>(b.x1 - b.x0) * (b.y1 - b.y0);
  return ii.rect_sum(b.x0, b.y0, b.x1, b.y1) / area;
}

Frame resize_bilinear(const Frame& frame, int w, int h) {
  if (frame.width == w && frame.height == h) return frame;
  if (w <= 0 || h <= 0 || frame.width == 0 || frame.height == 0) {
    throw std::invalid_argument("resize_bilinear: empty geometry");
  }
  Frame out(w, h, frame.channels, 0.0, frame.index);
  const double sx_scale = static_cast<double>(frame.width) / w;
  const double sy_scale = static_cast<double>(frame.height) / h;
  for (int y = 0; y < h; ++y) {
    const double sy = std::clamp((y + 0.5) * sy_scale - 0.5, 0.0, frame.height - 1.0);
    const int y0 = static_cast<int>(sy);
    const int y1 = std::min(y0 + 1, frame.height - 1);
    const double fy = sy - y0;
    for (int x = 0; x < w; ++x) {
      const double sx = std::clamp((x + 0.5) * sx_scale - 0.5, 0.0, frame.width - 1.0);
      const int x0 = static_cast<int>(sx);
      const int x1 = std::min(x0 + 1, frame.width - 1);
      const double fx = sx - x0;
      for (int c = 0; c < frame.channels; ++c) {
        // lerp form keeps flat regions exactly flat
        const double top = frame.at(x0, y0, c) + fx * (frame.at(x1, y0, c) - frame.at(x0, y0, c));
        const double bot = frame.at(x0, y1, c) + fx * (frame.at(x1, y1, c) - frame.at(x0, y1, c));
        out.at(x, y, c) = top + fy * (bot - top);
      }
    }
  }
  return out;
}

void clamp_samples(Frame& frame) {
  for (double& v : frame.data) v = std::clamp(v, 0.0, 255.0);
}

double psnr(const Frame& a, const Frame& b, int margin) {
  if (!a.same_shape(b)) throw std::invalid_argument("psnr: shape mismatch");
  double se = 0.0;
  std::size_t n = 0;
  for (int y = margin; y < a.height - margin; ++y) {
    for (int x = margin; x < a.width - margin; ++x) {
      for (int c = 0; c < a.channels; ++c) {
        const double d = a.at(x, y, c) - b.at(x, y, c);
        se += d * d;
        ++n;
      }
    }
  }
  if (n == 0) throw std::invalid_argument("psnr: margin leaves no pixels");
  if (se == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(255.0 * 255.0 / (se / static_cast<double>(n)));
}

}  // namespace md
