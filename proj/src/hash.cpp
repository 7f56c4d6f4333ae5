#include "voxmed/hash.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <random>

#include "voxmed/binary_io.hpp"
#include "voxmed/error.hpp"

namespace voxmed {

ContentHash sha256(std::span<const std::uint8_t> data) {
  ContentHash out{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 ||
      len != out.size()) {
    fail(ErrorCode::IoError, "SHA-256 computation failed");
  }
  return out;
}

std::string to_hex(const ContentHash& hash) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s;
  s.reserve(64);
  for (const auto b : hash) {
    s.push_back(kDigits[b >> 4]);
    s.push_back(kDigits[b & 0xf]);
  }
  return s;
}

ContentHash hash_from_hex(std::string_view hex) {
  auto nibble = [&](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    fail(ErrorCode::FormatError, "bad hex digit in hash '" + std::string(hex) + "'");
  };
  if (hex.size() != 64) fail(ErrorCode::FormatError, "hash must be 64 hex digits");
  ContentHash h{};
  for (std::size_t i = 0; i < h.size(); ++i) {
    h[i] = static_cast<std::uint8_t>(nibble(hex[2 * i]) << 4 | nibble(hex[2 * i + 1]));
  }
  return h;
}

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return data;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> data) {
  thread_local std::mt19937_64 suffix_rng{std::random_device{}()};
  auto tmp = path;
  tmp += ".tmp." + std::to_string(suffix_rng());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::IoError, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!out) fail(ErrorCode::IoError, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    fail(ErrorCode::IoError, "cannot rename into " + path.string());
  }
}

}  // namespace voxmed
