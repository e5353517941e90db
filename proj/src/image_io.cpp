#include "md/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace fs = std::filesystem;

namespace md {
namespace {

std::runtime_error io_error(const fs::path& p, const std::string& what) {
  return std::runtime_error(p.string() + ": " + what);
}

std::uint8_t quantize(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0))); }

Frame read_png(const fs::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw io_error(path, std::string("cannot decode PNG: ") + image.message);
  }
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw io_error(path, "cannot decode PNG: " + msg);
  }
  Frame f(static_cast<int>(image.width), static_cast<int>(image.height), color ? 3 : 1);
  std::transform(buf.begin(), buf.end(), f.data.begin(), [](std::uint8_t v) { return static_cast<double>(v); });
  return f;
}

Frame read_pgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error(path, "cannot open");
  std::string magic;
  in >> magic;
  if (magic != "P5") throw io_error(path, "not a binary PGM (P5)");
  auto next_int = [&]() {
    int v = -1;
    in >> std::ws;
    while (in.peek() == '#') {
      std::string line;
      std::getline(in, line);
      in >> std::ws;
    }
    in >> v;
    return v;
  };
  const int w = next_int(), h = next_int(), maxval = next_int();
  if (!in || w <= 0 || h <= 0 || maxval != 255) throw io_error(path, "malformed PGM header");
  in.get();  // single whitespace after maxval
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(w) * h);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size())) throw io_error(path, "truncated PGM data");
  Frame f(w, h, 1);
  std::transform(buf.begin(), buf.end(), f.data.begin(), [](std::uint8_t v) { return static_cast<double>(v); });
  return f;
}

bool has_ext(const fs::path& p, const char* ext) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e == ext;
}

}  // namespace

Frame read_image(const fs::path& path) {
  if (!fs::exists(path)) throw io_error(path, "no such file");
  if (has_ext(path, ".png")) return read_png(path);
  if (has_ext(path, ".pgm")) return read_pgm(path);
  throw io_error(path, "unsupported image extension");
}

void write_png(const fs::path& path, const Frame& frame) {
  std::vector<std::uint8_t> buf(frame.data.size());
  std::transform(frame.data.begin(), frame.data.end(), buf.begin(), quantize);
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(frame.width);
  image.height = static_cast<png_uint_32>(frame.height);
  image.format = frame.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, buf.data(), 0, nullptr)) {
    throw io_error(path, std::string("cannot write PNG: ") + image.message);
  }
}

void write_pgm(const fs::path& path, const Frame& frame) {
  if (frame.channels != 1) throw io_error(path, "PGM export needs a single-channel frame");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error(path, "cannot open for writing");
  out << "P5\n" << frame.width << ' ' << frame.height << "\n255\n";
  std::vector<std::uint8_t> buf(frame.data.size());
  std::transform(frame.data.begin(), frame.data.end(), buf.begin(), quantize);
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw io_error(path, "write failed");
}

void write_image(const fs::path& path, const Frame& frame) {
  if (has_ext(path, ".pgm")) {
    write_pgm(path, frame);
  } else {
    write_png(path, frame);
  }
}

fs::path frame_file_name(int index, const char* ext) {
  char name[32];
  std::snprintf(name, sizeof name, "frame_%06d%s", index, ext);
  return name;
}

std::vector<fs::path> list_video_frames(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw io_error(dir, "frame directory does not exist");
  std::vector<std::pair<int, fs::path>> found;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const fs::path& p = entry.path();
    if (!entry.is_regular_file() || !(has_ext(p, ".png") || has_ext(p, ".pgm"))) continue;
    const std::string stem = p.stem().string();
    if (stem.rfind("frame_", 0) != 0) continue;
    const std::string digits = stem.substr(6);
    if (digits.empty() || !std::all_of(digits.begin(), digits.end(), ::isdigit)) continue;
    found.emplace_back(std::stoi(digits), p);
  }
  std::sort(found.begin(), found.end());
  std::vector<fs::path> out;
  out.reserve(found.size());
  for (auto& f : found) out.push_back(std::move(f.second));
  return out;
}

std::vector<Frame> read_video(const fs::path& dir) {
  std::vector<Frame> frames;
  for (const auto& p : list_video_frames(dir)) {
    Frame f = read_image(p);
    f.index = std::stoi(p.stem().string().substr(6));
    if (!frames.empty() && !f.same_shape(frames.front())) throw io_error(p, "frame shape differs from first frame");
    frames.push_back(std::move(f));
  }
  if (frames.empty()) throw io_error(dir, "no frame_%06d images found");
  return frames;
}

}  // namespace md
