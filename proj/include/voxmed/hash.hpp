#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace voxmed {

// SHA-256 of the original audio bytes; identifies a recording everywhere.
using ContentHash = std::array<std::uint8_t, 32>;

ContentHash sha256(std::span<const std::uint8_t> data);
std::string to_hex(const ContentHash& hash);
ContentHash hash_from_hex(std::string_view hex);

}  // namespace voxmed
