#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <vector>

#include "iro/types.hpp"

namespace iro {

/// splitmix64 finalizer; a full-period 64-bit mixer with good avalanche.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Order-sensitive combine of two 64-bit values.
inline std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) {
  return mix64(h ^ (mix64(v) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2)));
}

/// FNV-1a over a string, used to turn purpose tags into stream keys.
inline std::uint64_t hash_string(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Stable hash of a prefix under a given seed (independent of process state).
inline std::uint64_t hash_prefix(std::uint64_t seed, const Prefix& p) {
  std::uint64_t h = hash_combine(seed, static_cast<std::uint64_t>(p.prompt_id));
  h = hash_combine(h, static_cast<std::uint64_t>(p.tokens.size()));
  for (TokenId t : p.tokens) h = hash_combine(h, static_cast<std::uint64_t>(t));
  return h;
}

/// Maps a 64-bit value to a double in [0, 1) using the top 53 bits.
inline double to_unit_double(std::uint64_t x) {
  return static_cast<double>(x >> 11) * 0x1.0p-53;
}

/**
 * Deterministic counter-based random stream.
 *
 * Streams are derived from (master seed, purpose tag, item index), so any
 * work item can be given an independent stream regardless of worker count or
 * scheduling order. Two streams with different derivation keys never share a
 * sequence.
 */
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, std::string_view purpose,
            std::uint64_t index)
      : state_(hash_combine(hash_combine(master_seed, hash_string(purpose)),
                            index)) {}

  explicit RngStream(std::uint64_t raw_state) : state_(raw_state) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t x = state_;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  /// Uniform double in [0, 1).
  double next_double() { return to_unit_double(next_u64()); }

  /// Uniform integer in [0, n); n must be positive.
  std::uint64_t next_below(std::uint64_t n) {
    // Rejection sampling keeps the draw exactly uniform.
    std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      std::uint64_t x = next_u64();
      if (x >= threshold) return x % n;
    }
  }

  /// Standard normal via Box-Muller.
  double next_gaussian() {
    double u1 = next_double();
    double u2 = next_double();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t state_;
};

/**
 * Samples an index from a probability vector by inverse CDF walked in index
 * order, so the result is a deterministic function of (dist, u). The final
 * index absorbs any rounding slack.
 */
inline std::size_t sample_index(const std::vector<double>& dist, double u) {
  double cum = 0.0;
  for (std::size_t i = 0; i + 1 < dist.size(); ++i) {
    cum += dist[i];
    if (u < cum) return i;
  }
  return dist.empty() ? 0 : dist.size() - 1;
}

}  // namespace iro
