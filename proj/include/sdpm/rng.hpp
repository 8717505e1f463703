#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <limits>

namespace sdpm {

inline std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t mix_key(std::uint64_t seed, std::initializer_list<std::uint64_t> key) {
  std::uint64_t h = seed;
  std::uint64_t out = splitmix64(h);
  for (std::uint64_t k : key) {
    std::uint64_t t = k ^ 0xd1b54a32d192ed03ULL;
    h = out ^ splitmix64(t);
    out = splitmix64(h);
  }
  return out;
}

// Step identifiers used when deriving per-update streams inside a sweep.
enum class Step : std::uint64_t {
  init = 1,
  censor,
  beta,
  tau2,
  kappa,
  sticks,
  concentration,
  selection,
  hyper,
  assign,
  latent,
  predict,
  simulate,
  misc
};

// xoshiro256++ engine whose state is derived from (seed, stream key).
// A stream is cheap to construct, so every row update gets its own.
class RngStream {
 public:
  using result_type = std::uint64_t;

  explicit RngStream(std::uint64_t seed = 0) : RngStream(seed, {}) {}

  RngStream(std::uint64_t seed, std::initializer_list<std::uint64_t> key) {
    std::uint64_t x = mix_key(seed, key);
    for (auto& w : s_) w = splitmix64(x);
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform on [0, 1).
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1).
  double uniform_open() {
    return (static_cast<double>((*this)() >> 12) + 0.5) * 0x1.0p-52;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::array<std::uint64_t, 4> s_{};
};

inline RngStream stream(std::uint64_t seed, std::uint64_t chain, std::uint64_t iter, Step step,
                        std::uint64_t row = 0) {
  return RngStream(seed, {chain, iter, static_cast<std::uint64_t>(step), row});
}

}  // namespace sdpm
