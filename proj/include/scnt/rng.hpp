#pragma once

#include <cstdint>

namespace scnt {

// Counter-based 64-bit generator (SplitMix64). The state advances by a fixed
// odd gamma and the output is a bijective mix of the counter, so the sequence
// for a given seed is identical on every platform. All floating transforms
// below use only arithmetic that IEEE-754 pins down exactly (no libm).
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  float next_float() { return static_cast<float>(next_u64() >> 40) * 0x1.0p-24f; }
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n). Multiply-shift map; slight modulo-free bias is
  // below 2^-32 for the small ranges used here.
  std::uint64_t next_below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Approximate standard normal via Irwin-Hall (sum of 12 uniforms minus 6).
  // Exactly reproducible everywhere; tails truncate at +-6, which is fine for
  // weight init and synthetic noise.
  float next_normal() {
    float s = 0.0f;
    for (int i = 0; i < 12; ++i) s += next_float();
    return s - 6.0f;
  }

  // Derive an independent stream, e.g. one per worker or per architecture.
  Rng fork(std::uint64_t stream) const {
    Rng mixer(state_ ^ (0xd1b54a32d192ed03ULL * (stream + 1)));
    return Rng(mixer.next_u64());
  }

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

}  // namespace scnt
