// Middlebury .flo files: float32 magic 202021.25, int32 width, int32 height,
// then row-major interleaved (u, v) float32, all little-endian.
#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "vtc/image_io.hpp"
#include "vtc/video_data.hpp"

namespace vtc {

inline constexpr float kFloMagic = 202021.25f;

class FloFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

template <class U>
void put_le(std::vector<unsigned char>& out, U value) {
  static_assert(sizeof(U) == 4);
  auto bits = std::bit_cast<std::uint32_t>(value);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((bits >> (8 * i)) & 0xff));
}

template <class U>
U get_le(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<U>(bits);
}

}  // namespace detail

inline std::vector<unsigned char> encode_flo(const FlowField<float>& field) {
  if (!field.all_finite()) throw std::invalid_argument("write_flo: non-finite flow values");
  std::vector<unsigned char> out;
  out.reserve(12 + static_cast<std::size_t>(field.height()) * field.width() * 8);
  detail::put_le(out, kFloMagic);
  detail::put_le(out, static_cast<std::int32_t>(field.width()));
  detail::put_le(out, static_cast<std::int32_t>(field.height()));
  for (int y = 0; y < field.height(); ++y)
    for (int x = 0; x < field.width(); ++x) {
      detail::put_le(out, field.u(y, x));
      detail::put_le(out, field.v(y, x));
    }
  return out;
}

inline FlowField<float> decode_flo(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 12) throw FloFormatError("flo: truncated header");
  const float magic = detail::get_le<float>(bytes.data());
  if (magic != kFloMagic) throw FloFormatError("flo: bad magic");
  const auto width = detail::get_le<std::int32_t>(bytes.data() + 4);
  const auto height = detail::get_le<std::int32_t>(bytes.data() + 8);
  if (width <= 0 || height <= 0 || width > (1 << 16) || height > (1 << 16)) {
    throw FloFormatError("flo: implausible dimensions");
  }
  const std::size_t need = 12 + static_cast<std::size_t>(width) * height * 8;
  if (bytes.size() < need) throw FloFormatError("flo: truncated payload");
  FlowField<float> f(height, width);
  const unsigned char* p = bytes.data() + 12;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      f.u(y, x) = detail::get_le<float>(p);
      f.v(y, x) = detail::get_le<float>(p + 4);
      p += 8;
    }
  return f;
}

inline void write_flo(const FlowField<float>& field, const std::filesystem::path& path) {
  const auto bytes = encode_flo(field);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("write failed: " + path.string());
}

inline FlowField<float> read_flo(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_flo(bytes);
}

}  // namespace vtc
