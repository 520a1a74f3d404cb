#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "assimlab/error.hpp"

namespace assimlab::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

/// Append-only little-endian byte buffer.
class ByteWriter {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void magic(std::string_view m) { bytes(m.data(), m.size()); }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void f64(double v) { bytes(&v, 8); }
  void f64s(std::span<const double> v) { bytes(v.data(), v.size() * sizeof(double)); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }

  const std::vector<unsigned char>& buffer() const noexcept { return buf_; }

 private:
  std::vector<unsigned char> buf_;
};

/// Bounds-checked little-endian reader; running off the end is a Truncated error.
class ByteReader {
 public:
  ByteReader(std::vector<unsigned char> data, std::string what)
      : data_(std::move(data)), what_(std::move(what)) {}

  void bytes(void* p, std::size_t n) {
    if (n > data_.size() - pos_) {
      throw FormatError(FormatError::Code::Truncated, what_ + ": truncated file");
    }
    std::memcpy(p, data_.data() + pos_, n);
    pos_ += n;
  }
  void expect_magic(std::string_view m) {
    std::string got(m.size(), '\0');
    if (data_.size() < m.size()) {
      throw FormatError(FormatError::Code::MagicMismatch, what_ + ": missing magic '" + std::string(m) + "'");
    }
    bytes(got.data(), m.size());
    if (got != m) {
      throw FormatError(FormatError::Code::MagicMismatch, what_ + ": bad magic, expected '" + std::string(m) + "'");
    }
  }
  void expect_version(std::uint32_t want) {
    const std::uint32_t v = u32();
    if (v != want) {
      throw FormatError(FormatError::Code::VersionMismatch,
                        what_ + ": version " + std::to_string(v) + ", expected " + std::to_string(want));
    }
  }
  std::uint8_t u8() {
    std::uint8_t v;
    bytes(&v, 1);
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, 8);
    return v;
  }
  double f64() {
    double v;
    bytes(&v, 8);
    return v;
  }
  void f64s(std::span<double> out) { bytes(out.data(), out.size() * sizeof(double)); }
  std::string str() {
    const std::uint32_t n = u32();
    if (n > remaining()) throw FormatError(FormatError::Code::Truncated, what_ + ": truncated string");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }
  void expect_end() const {
    if (pos_ != data_.size()) throw FormatError(FormatError::Code::Corrupt, what_ + ": trailing bytes");
  }

 private:
  std::vector<unsigned char> data_;
  std::size_t pos_ = 0;
  std::string what_;
};

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline std::string read_text(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return std::string(bytes.begin(), bytes.end());
}

inline void write_text(const std::filesystem::path& path, std::string_view text) {
  write_file(path, std::span(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

/// 64-bit FNV-1a, used for manifest content hashes.
inline std::uint64_t fnv1a64(std::span<const unsigned char> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace assimlab::io
