#include "md/embedding.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "md/binio.hpp"

namespace md {

std::vector<double> extract_features(const Frame& image) {
  if (image.width < 1 || image.height < 1) throw std::invalid_argument("extract_features: empty image");
  const GrayFrame g = to_grayscale(resize_bilinear(image, kEmbedSide, kEmbedSide));
  const int grid = kEmbedSide / kEmbedBlock;
  const double n = kEmbedBlock * kEmbedBlock;
  std::vector<double> out;
  out.reserve(kEmbedDim);
  for (int by = 0; by < grid; ++by) {
    for (int bx = 0; bx < grid; ++bx) {
      // running mean, then a second pass for the variance: flat blocks give exactly 0
      double mean = 0.0;
      int k = 0;
      for (int y = 0; y < kEmbedBlock; ++y)
        for (int x = 0; x < kEmbedBlock; ++x) mean += (g.at(bx * kEmbedBlock + x, by * kEmbedBlock + y) - mean) / ++k;
      double ss = 0.0;
      for (int y = 0; y < kEmbedBlock; ++y) {
        for (int x = 0; x < kEmbedBlock; ++x) {
          const double d = g.at(bx * kEmbedBlock + x, by * kEmbedBlock + y) - mean;
          ss += d * d;
        }
      }
      out.push_back(static_cast<float>(mean / 255.0));
      out.push_back(static_cast<float>(std::sqrt(ss / n) / 127.5));
    }
  }
  return out;
}

void FeatureSequence::validate() const {
  if (steps.empty()) throw std::invalid_argument("sequence " + video_id + ": no steps");
  if (label != 0 && label != 1) throw std::invalid_argument("sequence " + video_id + ": label must be 0 or 1");
  for (const auto& s : steps) {
    if (s.size() != steps.front().size()) throw std::invalid_argument("sequence " + video_id + ": ragged steps");
  }
}

void write_feature_file(const std::filesystem::path& path, const std::vector<std::vector<double>>& rows) {
  const std::size_t dim = rows.empty() ? 0 : rows.front().size();
  for (const auto& r : rows) {
    if (r.size() != dim) throw std::invalid_argument(path.string() + ": ragged feature rows");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  binio::put_magic(out, "MDFV");
  binio::put_u32(out, static_cast<std::uint32_t>(rows.size()));
  binio::put_u32(out, static_cast<std::uint32_t>(dim));
  for (const auto& r : rows)
    for (double v : r) binio::put_f32(out, static_cast<float>(v));
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

std::vector<std::vector<double>> read_feature_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path.string() + ": cannot open");
  binio::Reader r(in, path);
  r.expect_magic("MDFV");
  const std::uint32_t count = r.u32();
  const std::uint32_t dim = r.u32();
  std::vector<std::vector<double>> rows(count, std::vector<double>(dim));
  for (auto& row : rows)
    for (double& v : row) {
      v = r.f32();
      if (!std::isfinite(v)) r.fail("non-finite feature value");
    }
  if (!r.at_end()) r.fail("trailing bytes");
  return rows;
}

}  // namespace md
