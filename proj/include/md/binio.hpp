#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>

// Little-endian primitive I/O shared by the binary file formats.
namespace md::binio {

template <typename U>
U to_little(U v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    U r = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) r = (r << 8) | ((v >> (8 * i)) & 0xFF);
    return r;
  }
}

inline void put_u32(std::ostream& out, std::uint32_t v) {
  v = to_little(v);
  out.write(reinterpret_cast<const char*>(&v), 4);
}
inline void put_u8(std::ostream& out, std::uint8_t v) { out.put(static_cast<char>(v)); }
inline void put_f32(std::ostream& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }
inline void put_f64(std::ostream& out, double d) {
  std::uint64_t v = to_little(std::bit_cast<std::uint64_t>(d));
  out.write(reinterpret_cast<const char*>(&v), 8);
}
inline void put_magic(std::ostream& out, std::string_view magic) { out.write(magic.data(), 4); }

class Reader {
public:
  Reader(std::istream& in, std::filesystem::path path) : in_(in), path_(std::move(path)) {}

  void expect_magic(std::string_view magic) {
    std::array<char, 4> m{};
    raw(m.data(), 4);
    if (std::string_view(m.data(), 4) != magic) fail("bad magic, expected " + std::string(magic));
  }
  std::uint8_t u8() {
    char c = 0;
    raw(&c, 1);
    return static_cast<std::uint8_t>(c);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    raw(reinterpret_cast<char*>(&v), 4);
    return to_little(v);
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() {
    std::uint64_t v = 0;
    raw(reinterpret_cast<char*>(&v), 8);
    return std::bit_cast<double>(to_little(v));
  }
  void raw(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (in_.gcount() != static_cast<std::streamsize>(n)) fail("truncated file");
  }
  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }
  [[noreturn]] void fail(const std::string& what) const { throw std::runtime_error(path_.string() + ": " + what); }

private:
  std::istream& in_;
  std::filesystem::path path_;
};

}  // namespace md::binio
