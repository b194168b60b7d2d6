#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace doge {

inline constexpr const char* kCodeVersion = "0.1.0";

// 64-bit FNV-1a over raw bytes.
uint64_t fnv1a64(const void* data, size_t len, uint64_t seed = 0xcbf29ce484222325ULL);

// FNV-1a over a token list; each token hashed as 4 little-endian bytes.
// This is the stable context hash used by the feature map.
uint64_t hash_tokens(std::span<const int> tokens);

// Exact round-trip encoding of doubles as C99 hex-float strings ("%a").
std::string double_to_hex(double x);
double hex_to_double(const std::string& s);

// Shortest decimal form that round-trips the exact double value.
std::string double_to_string(double x);

// Digest of a double array at full binary precision (bit-exact equality check).
uint64_t digest_doubles(std::span<const double> values);

} // namespace doge
