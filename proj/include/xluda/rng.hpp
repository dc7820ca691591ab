// Copyright 2026 The xluda authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <cstddef>
#include <string>
#include <vector>

namespace xluda {

// Fixed-width counter-based generator (splitmix64 core). All sampling in the
// data-generation paths goes through this type so corpora are reproducible
// across platforms regardless of the standard library in use.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 bits of precision.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n). Rejection-sampled, unbiased.
  std::uint64_t next_below(std::uint64_t n) {
    std::uint64_t threshold = (0ULL - n) % n;
    for (;;) {
      std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  std::int64_t next_int(std::int64_t lo, std::int64_t hi) {  // inclusive range
    return lo + static_cast<std::int64_t>(next_below(static_cast<std::uint64_t>(hi - lo + 1)));
  }

  // Index sampled from an unnormalized weight vector.
  std::size_t next_categorical(const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double u = next_double() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
      acc += weights[i];
      if (u < acc) return i;
    }
    return weights.empty() ? 0 : weights.size() - 1;
  }

  double next_gaussian() {  // Box-Muller, one draw per call pair discarded
    double u1 = next_double();
    double u2 = next_double();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  // Derives an independent stream for a named purpose. Streams derived with
  // different tags from the same seed are statistically independent.
  static Rng derive(std::uint64_t seed, const std::string& tag) {
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
    for (unsigned char c : tag) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    h ^= seed + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    return Rng(h);
  }

  static Rng derive(std::uint64_t seed, const std::string& tag, std::uint64_t index) {
    Rng r = derive(seed, tag);
    r.state_ ^= 0x2545f4914f6cdd1dULL * (index + 1);
    r.next_u64();
    return r;
  }

private:
  std::uint64_t state_;
};

inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 1469598103934665603ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 1469598103934665603ULL) {
  return fnv1a(s.data(), s.size(), h);
}

}  // namespace xluda
