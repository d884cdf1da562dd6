// Versioned container of named tensors with a JSON metadata header.
//
// Layout (little-endian):
//   8 bytes  "VTCPARAM"
//   u32      format version
//   u32      metadata length, then metadata bytes (JSON text)
//   u32      tensor count
//   per tensor: u32 name length, name bytes, u8 dtype (0 = f32, 1 = f64),
//               i32 channels, i32 height, i32 width, raw values
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "vtc/image_io.hpp"
#include "vtc/tensor.hpp"

namespace vtc {

inline constexpr char kContainerMagic[8] = {'V', 'T', 'C', 'P', 'A', 'R', 'A', 'M'};
inline constexpr std::uint32_t kContainerVersion = 1;

class ContainerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class VersionMismatch : public ContainerError {
 public:
  using ContainerError::ContainerError;
};

template <class T>
using NamedTensors = std::map<std::string, Tensor<T>>;

namespace detail {

class ByteWriter {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    bytes_.insert(bytes_.end(), b, b + n);
  }
  template <class U>
  void le(U v) {
    static_assert(std::is_arithmetic_v<U>);
    using Bits = std::conditional_t<sizeof(U) == 8, std::uint64_t,
                                    std::conditional_t<sizeof(U) == 4, std::uint32_t,
                                                       std::conditional_t<sizeof(U) == 2, std::uint16_t, std::uint8_t>>>;
    auto bits = std::bit_cast<Bits>(v);
    for (std::size_t i = 0; i < sizeof(U); ++i) bytes_.push_back(static_cast<unsigned char>((bits >> (8 * i)) & 0xff));
  }
  void str(const std::string& s) {
    le(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  std::vector<unsigned char>& bytes() { return bytes_; }

 private:
  std::vector<unsigned char> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::vector<unsigned char>& b) : bytes_(b) {}
  void raw(void* p, std::size_t n) {
    need(n);
    std::memcpy(p, bytes_.data() + pos_, n);
    pos_ += n;
  }
  template <class U>
  U le() {
    using Bits = std::conditional_t<sizeof(U) == 8, std::uint64_t,
                                    std::conditional_t<sizeof(U) == 4, std::uint32_t,
                                                       std::conditional_t<sizeof(U) == 2, std::uint16_t, std::uint8_t>>>;
    need(sizeof(U));
    Bits bits = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<Bits>(bytes_[pos_ + i]) << (8 * i);
    pos_ += sizeof(U);
    return std::bit_cast<U>(bits);
  }
  std::string str() {
    const auto n = le<std::uint32_t>();
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw ContainerError("container: truncated data");
  }
  const std::vector<unsigned char>& bytes_;
  std::size_t pos_ = 0;
};

inline std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return std::vector<unsigned char>((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

inline void write_all(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("write failed: " + path.string());
}

}  // namespace detail

struct Container {
  std::string metadata;  // JSON text
  NamedTensors<double> f64;
  NamedTensors<float> f32;
};

template <class T>
void container_put(Container& c, const NamedTensors<T>& tensors) {
  for (const auto& [name, t] : tensors) {
    if constexpr (std::is_same_v<T, float>) {
      c.f32[name] = t;
    } else {
      c.f64[name] = t.template cast<double>();
    }
  }
}

// Fetch a tensor converted to T; throws when absent.
template <class T>
Tensor<T> container_get(const Container& c, const std::string& name) {
  if (auto it = c.f32.find(name); it != c.f32.end()) return it->second.template cast<T>();
  if (auto it = c.f64.find(name); it != c.f64.end()) return it->second.template cast<T>();
  throw ContainerError("missing parameter: " + name);
}

inline std::vector<unsigned char> encode_container(const Container& c) {
  detail::ByteWriter w;
  w.raw(kContainerMagic, sizeof(kContainerMagic));
  w.le(kContainerVersion);
  w.str(c.metadata);
  w.le(static_cast<std::uint32_t>(c.f32.size() + c.f64.size()));
  auto put = [&w](const std::string& name, std::uint8_t dtype, const auto& t) {
    w.str(name);
    w.le(dtype);
    w.le(static_cast<std::int32_t>(t.channels()));
    w.le(static_cast<std::int32_t>(t.height()));
    w.le(static_cast<std::int32_t>(t.width()));
    for (auto v : t.values()) w.le(v);
  };
  for (const auto& [name, t] : c.f32) put(name, 0, t);
  for (const auto& [name, t] : c.f64) put(name, 1, t);
  return std::move(w.bytes());
}

inline Container decode_container(const std::vector<unsigned char>& bytes) {
  detail::ByteReader r(bytes);
  char magic[8];
  r.raw(magic, sizeof(magic));
  if (std::memcmp(magic, kContainerMagic, sizeof(magic)) != 0) throw ContainerError("container: bad magic");
  const auto version = r.le<std::uint32_t>();
  if (version < kContainerVersion) {
    throw VersionMismatch("container version " + std::to_string(version) + " is older than supported version " +
                          std::to_string(kContainerVersion) +
                          "; re-export the parameters with the current tools (no automatic migration)");
  }
  if (version > kContainerVersion) {
    throw VersionMismatch("container version " + std::to_string(version) + " is newer than supported version " +
                          std::to_string(kContainerVersion));
  }
  Container c;
  c.metadata = r.str();
  const auto count = r.le<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str();
    const auto dtype = r.le<std::uint8_t>();
    const auto ch = r.le<std::int32_t>();
    const auto h = r.le<std::int32_t>();
    const auto wd = r.le<std::int32_t>();
    if (ch < 0 || h < 0 || wd < 0) throw ContainerError("container: negative dimension for " + name);
    const Shape s{ch, h, wd};
    if (dtype == 0) {
      Tensor<float> t(s);
      for (auto& v : t.values()) v = r.le<float>();
      c.f32[name] = std::move(t);
    } else if (dtype == 1) {
      Tensor<double> t(s);
      for (auto& v : t.values()) v = r.le<double>();
      c.f64[name] = std::move(t);
    } else {
      throw ContainerError("container: unknown dtype for " + name);
    }
  }
  return c;
}

inline void save_container(const Container& c, const std::filesystem::path& path) {
  detail::write_all(path, encode_container(c));
}

inline Container load_container(const std::filesystem::path& path) {
  return decode_container(detail::read_all(path));
}

}  // namespace vtc
