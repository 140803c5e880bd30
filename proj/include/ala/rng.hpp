#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace ala {

/// Philox4x32-10 counter-based generator (Salmon et al., Random123).
/// Satisfies UniformRandomBitGenerator; the stream is a pure function of
/// (seed, counter), so replicate r can use Philox(seed + r) directly.
class Philox4x32 {
 public:
  using result_type = std::uint32_t;
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  explicit Philox4x32(std::uint64_t seed = 0)
      : key_{static_cast<std::uint32_t>(seed),
             static_cast<std::uint32_t>(seed >> 32)} {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() {
    if (index_ == 4) {
      block_ = Bijection(counter_, key_);
      Increment();
      index_ = 0;
    }
    return block_[index_++];
  }

  void discard(unsigned long long z) {
    for (; z > 0; --z) (*this)();
  }

  /// The raw ten-round bijection; exposed for known-answer tests.
  static Counter Bijection(Counter ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
      }
      const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const auto lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

  void Increment() {
    for (auto& word : counter_) {
      if (++word != 0) break;
    }
  }

  Counter counter_{0, 0, 0, 0};
  Key key_;
  Counter block_{};
  int index_ = 4;
};

using Rng = Philox4x32;

}  // namespace ala
