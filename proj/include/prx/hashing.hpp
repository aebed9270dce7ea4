#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace prx::hashing {

constexpr std::uint64_t kFnvOffset = 14695981039346656037ull;

std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = kFnvOffset);
std::uint64_t mix64(std::uint64_t x);

std::array<std::uint8_t, 32> sha256(std::string_view data);
std::string sha256_hex(std::string_view data);
std::array<std::uint8_t, 32> hmac_sha256(std::string_view key, std::string_view message);
std::string hmac_sha256_hex(std::string_view key, std::string_view message);

std::string to_hex(const std::uint8_t* data, std::size_t n);

}  // namespace prx::hashing
