#pragma once
#include <cstdint>

namespace mirig {

// Deterministic, platform-stable generator (splitmix64 core).  All randomness
// in the library flows through this type so that runs are bit-reproducible
// across machines; std:: distributions are deliberately avoided because their
// output is implementation-defined.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // [0,1) with 53 random bits.
  double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // [0,n) without modulo bias (Lemire reduction).
  uint64_t uniform_int(uint64_t n) {
    return uint64_t((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Independent child stream; deterministic function of (state, tag).
  Rng fork(uint64_t tag) const {
    Rng child(state_ ^ (0xD1B54A32D192ED03ull * (tag + 1)));
    child.next_u64();
    child.next_u64();
    return child;
  }

 private:
  uint64_t state_;
};

// Stateless lattice hash -> [0,1); used by the procedural backgrounds.
inline double hash01(uint64_t a, uint64_t b, uint64_t c, uint64_t d) {
  uint64_t z = a * 0x9E3779B97F4A7C15ull ^ b * 0xBF58476D1CE4E5B9ull ^
               c * 0x94D049BB133111EBull ^ d * 0xD1B54A32D192ED03ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  z ^= z >> 31;
  return double(z >> 11) * 0x1.0p-53;
}

}  // namespace mirig
