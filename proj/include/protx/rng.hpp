#pragma once
#include <cmath>
#include <cstdint>
#include <limits>

namespace protx::rng {

// 64-bit finalizer (SplitMix64). Used to turn (root seed, stream index)
// into well-separated generator states, so stream i of a batch depends
// only on (seed, i) and never on thread scheduling.
inline std::uint64_t splitmix64_next(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Derive a named sub-seed (e.g. one per influence-matrix column) from a
// root seed. Pure function of (seed, tag).
inline std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t s = seed ^ (0xd1342543de82ef95ULL * (tag + 1));
  return splitmix64_next(s);
}

// Counter-seeded xoshiro256++ stream. One instance per particle history
// (or per scenario draw); instances never share state.
class Stream {
 public:
  Stream(std::uint64_t seed, std::uint64_t stream_id) {
    std::uint64_t s = seed ^ (0x9e3779b97f4a7c15ULL * (stream_id + 1));
    for (auto& word : state_) word = splitmix64_next(s);
    if ((state_[0] | state_[1] | state_[2] | state_[3]) == 0) state_[0] = 1;
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform on [0,1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on (0,1); safe as a log() argument.
  double uniform_open() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via the polar method; caches the second deviate.
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    cached_ = v * m;
    have_cached_ = true;
    return u * m;
  }

  // Exponential waiting distance for the given rate; +inf when the rate
  // vanishes (no event ever fires).
  double exponential(double rate) {
    if (rate <= 0.0) return std::numeric_limits<double>::infinity();
    return -std::log(uniform_open()) / rate;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  std::uint64_t state_[4];
  double cached_ = 0.0;
  bool have_cached_ = false;
};

}  // namespace protx::rng
