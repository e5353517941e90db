#pragma once

#include <filesystem>
#include <vector>

#include "md/imaging.hpp"

namespace md {

// PNG (8-bit gray or RGB after conversion) and binary PGM (P5, maxval 255).
// Samples are quantized (round-to-nearest, clamped) only here, on export.
// Errors throw std::runtime_error naming the offending file.
Frame read_image(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Frame& frame);
void write_pgm(const std::filesystem::path& path, const Frame& frame);
void write_image(const std::filesystem::path& path, const Frame& frame);  // by extension

// Frames named frame_%06d.png / frame_%06d.pgm in `dir`, ordered by index;
// Frame::index carries the number parsed from the file name.
std::vector<std::filesystem::path> list_video_frames(const std::filesystem::path& dir);
std::vector<Frame> read_video(const std::filesystem::path& dir);

std::filesystem::path frame_file_name(int index, const char* ext = ".png");

}  // namespace md
