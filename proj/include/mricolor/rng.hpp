#pragma once

#include <cmath>
#include <cstdint>
#include <string>

namespace mricolor {

/// 64-bit FNV-1a. Used for config fingerprints and manifest checksums.
inline uint64_t fnv1a64(const void* data, size_t n, uint64_t seed = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  uint64_t h = seed;
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

/// Small deterministic generator (splitmix64 core) with explicit uniform and
/// normal sampling so that streams are bit-stable independent of the standard
/// library's distribution implementations.
class SampleRng {
 public:
  explicit SampleRng(uint64_t seed) : state_(seed) {}

  /// Combines a base seed with a stream index (sample index, epoch, ...).
  static SampleRng for_stream(uint64_t seed, uint64_t stream) {
    SampleRng mix(seed ^ 0x9e3779b97f4a7c15ull);
    mix.next_u64();
    return SampleRng(mix.next_u64() ^ (stream * 0xbf58476d1ce4e5b9ull + 0x94d049bb133111ebull));
  }

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Integer in [lo, hi] inclusive.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    return lo + static_cast<int64_t>(next_u64() % static_cast<uint64_t>(hi - lo + 1));
  }

  /// Standard normal via Box-Muller.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  uint64_t state() const { return state_; }
  void set_state(uint64_t s) {
    state_ = s;
    have_spare_ = false;
  }

 private:
  uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace mricolor
