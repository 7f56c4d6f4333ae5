#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "voxmed/error.hpp"

namespace voxmed {

using Bytes = std::vector<std::uint8_t>;

inline std::span<const std::uint8_t> as_bytes(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

// Little-endian writer.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void i16(std::int16_t v) { put(static_cast<std::uint16_t>(v), 2); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void tag(std::string_view four_cc) { out_.insert(out_.end(), four_cc.begin(), four_cc.end()); }
  void bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }

  const Bytes& data() const& { return out_; }
  Bytes take() && { return std::move(out_); }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  Bytes out_;
};

// Little-endian bounds-checked reader. Running past the end throws with the
// configured code and the byte offset.
class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> data, ErrorCode underflow_code)
      : data_(data), code_(underflow_code) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }

  std::string tag() {
    auto b = take(4);
    return std::string(b.begin(), b.end());
  }

  std::span<const std::uint8_t> take(std::size_t n) {
    require(n);
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  void skip(std::size_t n) { take(n); }

 private:
  void require(std::size_t n) const {
    if (n > remaining()) {
      fail(code_, "need " + std::to_string(n) + " bytes at offset " + std::to_string(pos_) +
                      ", have " + std::to_string(remaining()));
    }
  }
  std::uint64_t get(int n) {
    require(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::span<const std::uint8_t> data_;
  ErrorCode code_;
  std::size_t pos_ = 0;
};

Bytes read_file(const std::filesystem::path& path);

// Writes to a sibling temporary file and renames it into place, so readers
// never observe a partially written file.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> data);

}  // namespace voxmed
