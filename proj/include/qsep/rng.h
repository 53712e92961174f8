#pragma once

#include <cmath>
#include <cstdint>
#include <string>

namespace qsep {

// splitmix64 step; also used standalone to derive substream seeds.
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Small deterministic RNG with a platform-stable output sequence.
// std::uniform_real_distribution is implementation-defined, so seeded
// artifacts (datasets, init weights) roll their own draws from raw bits.
class Rng {
  public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() { return splitmix64(state_); }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; one value per call, no caching,
    // so the stream position stays easy to reason about.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

    // Derive an independent child seed for substream i.
    uint64_t fork(uint64_t i) const {
        uint64_t s = state_ ^ (0xa0761d6478bd642fULL + i * 0xe7037ed1a0b428dbULL);
        return splitmix64(s);
    }

  private:
    uint64_t state_;
};

// FNV-1a over a byte string; stable across platforms and runs.
inline uint64_t fnv1a64(const char* data, size_t len) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (size_t i = 0; i < len; ++i) {
        h ^= static_cast<unsigned char>(data[i]);
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

} // namespace qsep
