// Copyright 2026 The confbt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>

namespace confbt {

namespace detail {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

// SplitMix64 finalizer.
constexpr std::uint64_t Mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Counter-based random stream. The n-th draw is a pure function of
/// (seed, stream id, n), so streams can be created and consumed in any order.
class RngStream {
 public:
  RngStream() : RngStream(0, 0) {}
  RngStream(std::uint64_t seed, std::uint64_t stream)
      : seed_(seed),
        stream_(stream),
        key_(detail::Mix64(detail::Mix64(seed + detail::kGolden) ^
                           (stream * 0xD1B54A32D192ED03ULL + 0x8CB92BA72F3D8DD7ULL))) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }
  std::uint64_t counter() const { return counter_; }

  /// Independent child stream identified by `id`; does not advance this one.
  RngStream Substream(std::uint64_t id) const {
    return RngStream(seed_, detail::Mix64(stream_ ^ detail::Mix64(id + 0x632BE59BD9B4E019ULL)));
  }

  std::uint64_t NextU64() {
    return detail::Mix64(key_ + (++counter_) * detail::kGolden);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double Uniform() { return static_cast<double>(NextU64() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n). Uses rejection to stay unbiased.
  std::uint64_t Below(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t r;
    do {
      r = NextU64();
    } while (r >= limit);
    return r % n;
  }

  double Normal() {
    double u1 = Uniform();
    double u2 = Uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Fisher-Yates shuffle driven by an RngStream.
template <typename Vec>
void Shuffle(Vec& v, RngStream& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.Below(i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace confbt
