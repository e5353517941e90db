#include "md/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "md/binio.hpp"

namespace md {

std::vector<Keypoint> detect_fast(const GrayFrame& gray, const FastParams& params) {
  if (gray.width < 7 || gray.height < 7) throw std::invalid_argument("detect_fast: image smaller than 7x7");
  if (!(params.threshold > 0.0 && params.threshold < 255.0)) {
    throw std::invalid_argument("detect_fast: threshold must be in (0, 255)");
  }
  if (params.n_contiguous < 9 || params.n_contiguous > 12) {
    throw std::invalid_argument("detect_fast: n_contiguous must be in [9, 12]");
  }
  std::vector<double> scores;
  kernels::parallel::fast_score_map(gray, params.threshold, params.n_contiguous, scores);

  std::vector<Keypoint> kps;
  if (params.nonmax) {
    std::vector<std::uint8_t> keep;
    kernels::parallel::nonmax_3x3(scores, gray.width, gray.height, keep);
    for (int y = 3; y < gray.height - 3; ++y) {
      for (int x = 3; x < gray.width - 3; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * gray.width + x;
        if (keep[i]) kps.push_back({static_cast<double>(x), static_cast<double>(y), scores[i]});
      }
    }
  } else {
    for (int y = 3; y < gray.height - 3; ++y) {
      for (int x = 3; x < gray.width - 3; ++x) {
        const double s = scores[static_cast<std::size_t>(y) * gray.width + x];
        if (s > 0.0) kps.push_back({static_cast<double>(x), static_cast<double>(y), s});
      }
    }
  }
  // Raster order is already established, so a stable sort keeps it among ties.
  std::stable_sort(kps.begin(), kps.end(), [](const Keypoint& a, const Keypoint& b) { return a.score > b.score; });
  if (params.max_keypoints > 0 && kps.size() > static_cast<std::size_t>(params.max_keypoints)) {
    kps.resize(static_cast<std::size_t>(params.max_keypoints));
  }
  return kps;
}

double RetinalPattern::extent() const {
  double e = 0.0;
  for (const auto& f : fields) e = std::max(e, std::max(std::abs(f.dx), std::abs(f.dy)) + f.radius);
  return e;
}

RetinalPattern build_pattern(const PatternConfig& config) {
  if (config.ring_radii.size() != config.field_radii.size()) {
    throw std::invalid_argument("build_pattern: ring and field radius lists differ in length");
  }
  RetinalPattern p;
  p.ring_radii = config.ring_radii;
  p.fields.push_back({0.0, 0.0, config.center_radius});
  for (std::size_t r = 0; r < config.ring_radii.size(); ++r) {
    const double offset = (r % 2 == 1) ? config.odd_ring_offset_deg : 0.0;
    const double step = 360.0 / config.fields_per_ring;
    for (int k = 0; k < config.fields_per_ring; ++k) {
      const double a = (k * step + offset) * std::numbers::pi / 180.0;
      p.fields.push_back({config.ring_radii[r] * std::cos(a), config.ring_radii[r] * std::sin(a),
                          config.field_radii[r]});
    }
  }
  if (p.fields.size() > 64) throw std::invalid_argument("build_pattern: at most 64 fields supported");

  std::vector<kernels::FieldPair> all;
  for (int i = 0; i < static_cast<int>(p.fields.size()); ++i) {
    for (int j = i + 1; j < static_cast<int>(p.fields.size()); ++j) all.push_back({i, j});
  }
  if (all.size() < static_cast<std::size_t>(kDescriptorBits)) {
    throw std::invalid_argument("build_pattern: fewer than 512 field pairs");
  }
  std::stable_sort(all.begin(), all.end(), [&](const kernels::FieldPair& a, const kernels::FieldPair& b) {
    return p.fields[a.a].radius + p.fields[a.b].radius > p.fields[b.a].radius + p.fields[b.b].radius;
  });
  all.resize(kDescriptorBits);
  p.pairs = std::move(all);
  return p;
}

std::vector<BinaryDescriptor> describe(const GrayFrame& gray, std::span<const Keypoint> kps,
                                       const RetinalPattern& pattern) {
  std::vector<Keypoint> kept;
  std::vector<Point2> centers;
  kept.reserve(kps.size());
  for (const auto& kp : kps) {
    bool inside = true;
    for (const auto& f : pattern.fields) {
      const PixelBox b = square_box({kp.x + f.dx, kp.y + f.dy}, f.radius);
      if (b.x0 < 0 || b.y0 < 0 || b.x1 > gray.width || b.y1 > gray.height) {
        inside = false;
        break;
      }
    }
    if (inside) {
      kept.push_back(kp);
      centers.push_back({kp.x, kp.y});
    }
  }
  const IntegralImage ii = integral(gray);
  std::vector<Bits512> bits;
  kernels::parallel::describe(ii, centers, pattern.fields, pattern.pairs, bits);
  std::vector<BinaryDescriptor> out(kept.size());
  for (std::size_t i = 0; i < kept.size(); ++i) out[i] = {bits[i], kept[i]};
  return out;
}

std::vector<Match> match(std::span<const BinaryDescriptor> fixed, std::span<const BinaryDescriptor> moving,
                         int max_distance) {
  std::vector<Match> out;
  if (fixed.empty() || moving.empty()) return out;
  std::vector<Bits512> fb(fixed.size()), mb(moving.size());
  std::transform(fixed.begin(), fixed.end(), fb.begin(), [](const BinaryDescriptor& d) { return d.bits; });
  std::transform(moving.begin(), moving.end(), mb.begin(), [](const BinaryDescriptor& d) { return d.bits; });
  std::vector<kernels::Nearest> forward, backward;
  kernels::parallel::nearest(fb, mb, forward);
  kernels::parallel::nearest(mb, fb, backward);
  for (std::size_t i = 0; i < forward.size(); ++i) {
    const kernels::Nearest& f = forward[i];
    if (f.distance > max_distance) continue;
    if (backward[static_cast<std::size_t>(f.index)].index != static_cast<int>(i)) continue;
    out.push_back({static_cast<int>(i), f.index, f.distance});
  }
  return out;
}

void write_descriptors(const std::filesystem::path& path, std::span<const BinaryDescriptor> descriptors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  binio::put_magic(out, "MDBD");
  binio::put_u32(out, static_cast<std::uint32_t>(descriptors.size()));
  for (const auto& d : descriptors) {
    binio::put_f32(out, static_cast<float>(d.keypoint.x));
    binio::put_f32(out, static_cast<float>(d.keypoint.y));
    binio::put_f32(out, static_cast<float>(d.keypoint.score));
    for (int byte = 0; byte < kDescriptorBits / 8; ++byte) {
      binio::put_u8(out, static_cast<std::uint8_t>(d.bits[byte / 8] >> (8 * (byte % 8))));
    }
  }
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

std::vector<BinaryDescriptor> read_descriptors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path.string() + ": cannot open");
  binio::Reader r(in, path);
  r.expect_magic("MDBD");
  const std::uint32_t n = r.u32();
  std::vector<BinaryDescriptor> out(n);
  for (auto& d : out) {
    d.keypoint.x = r.f32();
    d.keypoint.y = r.f32();
    d.keypoint.score = r.f32();
    for (int byte = 0; byte < kDescriptorBits / 8; ++byte) {
      d.bits[byte / 8] |= static_cast<std::uint64_t>(r.u8()) << (8 * (byte % 8));
    }
  }
  return out;
}

}  // namespace md
