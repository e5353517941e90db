#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "md/imaging.hpp"

namespace md {

// Block-statistics image embedding. The input is resized to 224x224 and
// converted to gray; each 16x16 block of the 14x14 grid contributes its mean
// (scaled by 1/255) followed by its population standard deviation (scaled by
// 1/127.5), blocks in raster order. Values are rounded to float precision so a
// feature file round trip is lossless.
inline constexpr int kEmbedSide = 224;
inline constexpr int kEmbedBlock = 16;
inline constexpr int kEmbedDim = 2 * (kEmbedSide / kEmbedBlock) * (kEmbedSide / kEmbedBlock);

std::vector<double> extract_features(const Frame& image);

// One vector per segment image of a video, in temporal order.
struct FeatureSequence {
  std::string video_id;
  int label = 0;  // 1 live, 0 attack
  std::string subset;
  std::vector<std::vector<double>> steps;

  std::size_t dim() const { return steps.empty() ? 0 : steps.front().size(); }
  void validate() const;  // throws std::invalid_argument
};

// MDFV: magic, u32 count, u32 dim, then count*dim f32 values row-major.
void write_feature_file(const std::filesystem::path& path, const std::vector<std::vector<double>>& rows);
std::vector<std::vector<double>> read_feature_file(const std::filesystem::path& path);

}  // namespace md
