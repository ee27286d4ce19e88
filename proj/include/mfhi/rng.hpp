#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace mfhi {

// Deterministic PRNG (xoshiro256++ seeded through splitmix64). All
// distributions are implemented here rather than with <random> adapters so
// generated sequences are identical across standard libraries, and so the
// full generator state fits in four words for checkpointing.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next();

  // Integer in [0, bound) via the multiply-shift reduction.
  uint32_t uniform_u32(uint32_t bound);

  // Real in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);

  // Standard normal via Box-Muller (sine branch discarded, so the
  // generator state stays position-independent).
  double normal();

  // First k entries of a Fisher-Yates shuffle of 0..n-1.
  std::vector<int> sample_without_replacement(int n, int k);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (size_t i = items.size(); i > 1; --i) {
      size_t j = uniform_u32(static_cast<uint32_t>(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  // Derive an independent stream for a named purpose. Streams produced
  // from the same (seed, tag) pair are identical across runs.
  Rng fork(uint64_t tag) const;

  std::string serialize() const;
  static Rng deserialize(const std::string& text);

  bool operator==(const Rng& other) const { return state_ == other.state_; }

 private:
  Rng() = default;
  std::array<uint64_t, 4> state_{};
  uint64_t seed_ = 0;
};

}  // namespace mfhi
