#include "mfhi/rng.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>

#include "mfhi/error.hpp"

namespace mfhi {

namespace {

uint64_t splitmix64(uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(uint64_t seed) : seed_(seed) {
  uint64_t s = seed;
  for (auto& w : state_) w = splitmix64(s);
}

uint64_t Rng::next() {
  const uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
  const uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

uint32_t Rng::uniform_u32(uint32_t bound) {
  if (bound == 0) throw ArgumentError("uniform_u32: bound must be positive");
  const uint64_t r = next() >> 32;
  return static_cast<uint32_t>((r * static_cast<uint64_t>(bound)) >> 32);
}

double Rng::uniform() {
  return static_cast<double>(next() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
  double u1 = uniform();
  while (u1 == 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::vector<int> Rng::sample_without_replacement(int n, int k) {
  if (k < 0 || k > n) throw ArgumentError("sample_without_replacement: k out of range");
  std::vector<int> pool(n);
  for (int i = 0; i < n; ++i) pool[i] = i;
  for (int i = 0; i < k; ++i) {
    const int j = i + static_cast<int>(uniform_u32(static_cast<uint32_t>(n - i)));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

Rng Rng::fork(uint64_t tag) const {
  uint64_t s = seed_ ^ (0x6a09e667f3bcc909ULL * (tag + 1));
  return Rng(splitmix64(s));
}

std::string Rng::serialize() const {
  char buf[4 * 17 + 18];
  std::snprintf(buf, sizeof(buf), "%016llx %016llx %016llx %016llx %016llx",
                static_cast<unsigned long long>(state_[0]),
                static_cast<unsigned long long>(state_[1]),
                static_cast<unsigned long long>(state_[2]),
                static_cast<unsigned long long>(state_[3]),
                static_cast<unsigned long long>(seed_));
  return buf;
}

Rng Rng::deserialize(const std::string& text) {
  Rng rng;
  unsigned long long w[5];
  if (std::sscanf(text.c_str(), "%llx %llx %llx %llx %llx", &w[0], &w[1], &w[2],
                  &w[3], &w[4]) != 5) {
    throw FormatError("Rng::deserialize: expected five hex words, got \"" + text + "\"");
  }
  for (int i = 0; i < 4; ++i) rng.state_[i] = w[i];
  rng.seed_ = w[4];
  return rng;
}

}  // namespace mfhi
