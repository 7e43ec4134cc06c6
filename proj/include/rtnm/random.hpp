#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <string_view>

namespace rtnm {

// SplitMix64 finaliser; used to derive keys and tie-break perturbations.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
  return mix64(a ^ mix64(b));
}

// Philox4x32-10 (Salmon et al., SC'11): a counter-based generator. The output
// block for counter c under key k is a pure function of (k, c).
struct Philox4x32 {
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter block(Counter ctr, Key key);
};

// Sequential draws from one Philox substream. Substream (seed, stream) uses
// key = seed and counter words (draw_lo, draw_hi, stream_lo, stream_hi), so
// distinct streams never share counters. Every transform below is defined
// here rather than taken from <random>, which keeps draws identical across
// standard libraries.
class RandomStream {
 public:
  static constexpr std::string_view kGeneratorName = "philox4x32-10";

  RandomStream(std::uint64_t seed, std::uint64_t stream);

  std::uint32_t next_u32();
  std::uint64_t next_u64();
  // Uniform on (0, 1).
  double uniform();
  // Unbiased integer in [0, n), n >= 1 (Lemire's multiply-and-reject).
  std::uint64_t below(std::uint64_t n);
  // Standard normal (Marsaglia polar method).
  double normal();

 private:
  void refill();

  Philox4x32::Key key_;
  std::uint64_t stream_;
  std::uint64_t block_index_ = 0;
  Philox4x32::Counter buffer_{};
  int used_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace rtnm
