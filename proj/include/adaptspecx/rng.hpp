#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace adaptspecx {

namespace detail {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Counter-based Philox4x32-10 generator.
///
/// The 64-bit seed forms the key and the 64-bit stream id occupies the upper
/// half of the counter, so every (seed, stream) pair indexes its own sequence
/// without any shared state. `substream` hashes additional tags into a new
/// stream id, which is how the sampler gives each (iteration, step, index)
/// task a private generator.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0) : seed_(seed), stream_(stream) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    if (buffered_ == 0) {
      refill();
      buffered_ = 2;
    }
    --buffered_;
    return buffer_[buffered_];
  }

  /// Uniform on the open interval (0, 1) with 53 random bits.
  double uniform() {
    for (;;) {
      const double u = static_cast<double>((*this)() >> 11) * 0x1.0p-53;
      if (u > 0.0) return u;
    }
  }

  [[nodiscard]] Rng substream(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) const {
    std::uint64_t h = detail::splitmix64(stream_ ^ 0x6A09E667F3BCC909ULL);
    h = detail::splitmix64(h ^ a);
    h = detail::splitmix64(h ^ (b + 0x3C6EF372FE94F82BULL));
    h = detail::splitmix64(h ^ (c + 0xA54FF53A5F1D36F1ULL));
    return Rng(seed_, h);
  }

  [[nodiscard]] std::uint64_t seed() const { return seed_; }
  [[nodiscard]] std::uint64_t stream() const { return stream_; }
  [[nodiscard]] std::uint64_t blocks_used() const { return counter_; }

 private:
  static void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
  }

  void refill() {
    std::array<std::uint32_t, 4> c{static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32),
                                   static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
    std::uint32_t k0 = static_cast<std::uint32_t>(seed_);
    std::uint32_t k1 = static_cast<std::uint32_t>(seed_ >> 32);
    for (int round = 0; round < 10; ++round) {
      std::uint32_t hi0, lo0, hi1, lo1;
      mulhilo(0xD2511F53u, c[0], hi0, lo0);
      mulhilo(0xCD9E8D57u, c[2], hi1, lo1);
      c = {hi1 ^ c[1] ^ k0, lo1, hi0 ^ c[3] ^ k1, lo0};
      k0 += 0x9E3779B9u;
      k1 += 0xBB67AE85u;
    }
    ++counter_;
    buffer_[0] = (static_cast<std::uint64_t>(c[0]) << 32) | c[1];
    buffer_[1] = (static_cast<std::uint64_t>(c[2]) << 32) | c[3];
  }

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
  int buffered_ = 0;
};

}  // namespace adaptspecx
