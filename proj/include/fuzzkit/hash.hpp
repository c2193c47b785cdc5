#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fuzzkit {

using Digest256 = std::array<std::uint8_t, 32>;

Digest256 sha256(std::span<const std::uint8_t> data);

// Lowercase hex of the full 32-byte digest.
std::string sha256_hex(std::span<const std::uint8_t> data);
std::string sha256_hex(std::string_view text);

// Lowercase hex of the first 16 digest bytes; used for stack-frame hashes.
std::string sha256_hex16(std::string_view text);

std::string to_hex(std::span<const std::uint8_t> bytes);

}  // namespace fuzzkit
