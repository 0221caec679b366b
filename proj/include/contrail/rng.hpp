#ifndef CONTRAIL_RNG_HPP
#define CONTRAIL_RNG_HPP

#include <cstdint>
#include <random>

namespace contrail {

// splitmix64 finalizer; used both as a mixer and to derive stream seeds.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Sample seed for (global seed, step, slot). Every augmentation draw is a
// pure function of this value, which keeps streams reproducible across runs
// and across worker counts.
inline uint64_t sample_seed(uint64_t seed, uint64_t step, uint64_t slot) {
  uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ splitmix64(step + 0x243F6A8885A308D3ull));
  h = splitmix64(h ^ splitmix64(slot + 0x13198A2E03707344ull));
  return h;
}

// mt19937_64 wrapper with hand-rolled draw helpers. libstdc++ distribution
// objects are implementation-defined; these are not, so identical seeds give
// identical streams on any platform.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n)
  int64_t uniform_int(int64_t n) {
    return static_cast<int64_t>((static_cast<__uint128_t>(next_u64()) *
                                 static_cast<__uint128_t>(n)) >> 64);
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 gen_;
};

}  // namespace contrail

#endif  // CONTRAIL_RNG_HPP
