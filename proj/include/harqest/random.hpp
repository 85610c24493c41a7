#pragma once

// Reproducible random streams. Each simulation replicate owns independent
// streams whose seeds are derived from (base seed, replicate, stream id) with
// SplitMix64, so the same replicate sees the same randomness under every
// policy (common random numbers).

#include <cstdint>
#include <random>

namespace harqest {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

enum class StreamId : std::uint64_t { channel = 1, packet = 2, initial = 3 };

/// seed = splitmix64(splitmix64(base) ^ splitmix64(2^32 * replicate + stream)).
inline constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t replicate, StreamId stream) noexcept {
  return splitmix64(splitmix64(base) ^ splitmix64((replicate << 32) + static_cast<std::uint64_t>(stream)));
}

class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1) built from the top 53 bits, identical on every platform.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace harqest
