// PNG frame files and frame directories.
#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <regex>
#include <stdexcept>
#include <string>
#include <vector>

#include "vtc/video_data.hpp"

namespace vtc {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SequenceTooShort : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_file(const std::filesystem::path& p, const char* mode) {
  FilePtr f(std::fopen(p.c_str(), mode));
  if (!f) throw IoError("cannot open " + p.string());
  return f;
}

[[noreturn]] inline void png_error_fn(png_structp, png_const_charp msg) { throw IoError(std::string("png: ") + msg); }
inline void png_warning_fn(png_structp, png_const_charp) {}

}  // namespace detail

// Reads an 8- or 16-bit PNG as RGB in [0,1]. Gray is replicated to three
// channels, alpha is dropped.
inline Tensor<float> read_png(const std::filesystem::path& path) {
  auto file = detail::open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, detail::png_error_fn,
                                           detail::png_warning_fn);
  if (!png) throw IoError("png: cannot allocate read struct");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_read_struct(p, i, nullptr); }
  } guard{&png, &info};

  png_init_io(png, file.get());
  png_read_info(png, info);
  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);

  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  if (depth == 16) png_set_swap(png);  // host order, little-endian hosts
  png_read_update_info(png, info);
  depth = png_get_bit_depth(png, info);
  const int channels = png_get_channels(png, info);
  if (channels != 3) throw IoError("png: unsupported channel layout in " + path.string());

  const std::size_t rowbytes = png_get_rowbytes(png, info);
  std::vector<unsigned char> buffer(rowbytes * height);
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) rows[y] = buffer.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);

  Tensor<float> out(Shape{3, height, width});
  const float maxcode = depth == 16 ? 65535.0f : 255.0f;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < 3; ++c) {
        unsigned code;
        if (depth == 16) {
          const auto* p = reinterpret_cast<const std::uint16_t*>(rows[y]);
          code = p[x * 3 + c];
        } else {
          code = rows[y][x * 3 + c];
        }
        out(c, y, x) = static_cast<float>(code) / maxcode;
      }
  return out;
}

// Writes an RGB frame, values clamped to [0,1] and rounded to the nearest code.
inline void write_png(const std::filesystem::path& path, const Tensor<float>& frame, int bit_depth = 8) {
  if (frame.channels() != 3) throw std::invalid_argument("write_png: frame must be RGB");
  if (bit_depth != 8 && bit_depth != 16) throw std::invalid_argument("write_png: bit depth must be 8 or 16");
  const int height = frame.height(), width = frame.width();
  const int bytes = bit_depth / 8;
  const double maxcode = bit_depth == 16 ? 65535.0 : 255.0;
  std::vector<unsigned char> buffer(static_cast<std::size_t>(height) * width * 3 * bytes);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(static_cast<double>(frame(c, y, x)), 0.0, 1.0);
        const auto code = static_cast<unsigned>(std::lround(v * maxcode));
        const std::size_t i = ((static_cast<std::size_t>(y) * width + x) * 3 + c) * bytes;
        if (bytes == 2) {
          buffer[i] = static_cast<unsigned char>(code >> 8);
          buffer[i + 1] = static_cast<unsigned char>(code & 0xff);
        } else {
          buffer[i] = static_cast<unsigned char>(code);
        }
      }

  auto file = detail::open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, detail::png_error_fn,
                                            detail::png_warning_fn);
  if (!png) throw IoError("png: cannot allocate write struct");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_write_struct(p, i); }
  } guard{&png, &info};

  png_init_io(png, file.get());
  png_set_IHDR(png, info, width, height, bit_depth, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) {
    png_write_row(png, buffer.data() + static_cast<std::size_t>(y) * width * 3 * bytes);
  }
  png_write_end(png, nullptr);
}

namespace detail {

// Splits a printf-style template with one %0Nd field into a regex.
inline std::regex pattern_regex(const std::string& pattern) {
  static const std::regex field(R"(%0?(\d*)d)");
  std::smatch m;
  if (!std::regex_search(pattern, m, field)) {
    throw std::invalid_argument("frame pattern needs one %d field: " + pattern);
  }
  auto escape = [](const std::string& s) {
    static const std::regex special(R"([.^$|()\[\]{}*+?\\])");
    return std::regex_replace(s, special, R"(\$&)");
  };
  return std::regex(escape(m.prefix().str()) + R"((\d+))" + escape(m.suffix().str()));
}

inline std::string format_index(const std::string& pattern, int index) {
  std::vector<char> buf(pattern.size() + 32);
  const int n = std::snprintf(buf.data(), buf.size(), pattern.c_str(), index);
  if (n < 0) throw std::invalid_argument("bad frame pattern: " + pattern);
  return std::string(buf.data(), static_cast<std::size_t>(n));
}

}  // namespace detail

// Frame files in `dir` whose names match `pattern`, ordered by index.
inline std::vector<std::filesystem::path> list_frame_files(const std::filesystem::path& dir,
                                                           const std::string& pattern = "%05d.png") {
  if (!std::filesystem::is_directory(dir)) throw IoError("missing frame directory: " + dir.string());
  const std::regex re = detail::pattern_regex(pattern);
  std::map<long, std::filesystem::path> indexed;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    std::smatch m;
    if (std::regex_match(name, m, re)) indexed.emplace(std::stol(m[1].str()), entry.path());
  }
  std::vector<std::filesystem::path> out;
  for (auto& [i, p] : indexed) out.push_back(p);
  return out;
}

inline FrameSequence<float> load_frame_sequence(const std::filesystem::path& dir,
                                                const std::string& pattern = "%05d.png") {
  const auto files = list_frame_files(dir, pattern);
  if (files.size() < 2) {
    throw SequenceTooShort("sequence too short: " + std::to_string(files.size()) + " frame(s) in " +
                           dir.string());
  }
  std::vector<Tensor<float>> frames;
  frames.reserve(files.size());
  for (const auto& f : files) {
    auto img = read_png(f);
    clamp_unit(img);
    if (!frames.empty() && img.shape() != frames.front().shape()) {
      throw DimensionMismatch("dimension mismatch in " + dir.string() + ": " + f.filename().string() +
                              " is " + to_string(img.shape()) + ", expected " +
                              to_string(frames.front().shape()));
    }
    frames.push_back(std::move(img));
  }
  return FrameSequence<float>(std::move(frames));
}

inline void save_frame_sequence(const FrameSequence<float>& seq, const std::filesystem::path& dir,
                                const std::string& pattern = "%05d.png", int bit_depth = 8) {
  std::filesystem::create_directories(dir);
  for (int t = 1; t <= seq.length(); ++t) {
    write_png(dir / detail::format_index(pattern, t), seq.at(t), bit_depth);
  }
}

}  // namespace vtc
