#ifndef SGAP_RNG_HPP
#define SGAP_RNG_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string_view>

namespace sgap {

// All randomness in the project flows through this generator. Streams are
// derived from a master seed plus structural keys (epoch, step, purpose
// tag), never from one long sequence, so resuming a run from a checkpoint
// lands on exactly the numbers an uninterrupted run would have drawn.
//
// Core mixer is splitmix64; output quality is plenty for noise sampling,
// shuffles and weight init, and the arithmetic is identical on every
// platform we build on.

inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline uint64_t mix_key(uint64_t seed, uint64_t k) {
  uint64_t s = seed ^ (0x9e3779b97f4a7c15ull + (k << 1));
  return splitmix64(s);
}

// FNV-1a over raw bytes; pass the previous result as h to hash in chunks.
inline uint64_t fnv1a64(const void* data, size_t n,
                        uint64_t h = 1469598103934665603ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline uint64_t mix_tag(uint64_t seed, std::string_view tag) {
  return mix_key(seed, fnv1a64(tag.data(), tag.size()));
}

class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {
    // Warm the state so nearby seeds decorrelate immediately.
    splitmix64(state_);
  }

  // Derives an independent stream; the parent stream is not advanced.
  Rng derive(uint64_t k) const { return Rng(mix_key(state_, k)); }
  Rng derive(std::string_view tag) const { return Rng(mix_tag(state_, tag)); }
  Rng derive(std::string_view tag, uint64_t k) const {
    return Rng(mix_key(mix_tag(state_, tag), k));
  }

  uint64_t next_u64() { return splitmix64(state_); }

  // Uniform in [0,1) with 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n).
  uint64_t below(uint64_t n) { return next_u64() % n; }

  // Standard normal via Box-Muller. The second value of each pair is
  // cached so consecutive draws cost one pair of uniforms on average.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<uint64_t>(last - first);
    for (uint64_t i = n; i > 1; --i) {
      const uint64_t j = below(i);
      std::swap(first[i - 1], first[j]);
    }
  }

 private:
  uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace sgap

#endif  // SGAP_RNG_HPP
