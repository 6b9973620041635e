#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <vector>

#include "dance/tensor.hpp"

namespace dance {

// splitmix64; fully specified so streams are identical across platforms and
// standard-library versions (std::normal_distribution is not).
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n)
  int uniform_int(int n) { return static_cast<int>(next_u64() % static_cast<uint64_t>(n)); }

  // Box-Muller; the sine half is discarded to keep one draw per call.
  double normal(double mean = 0.0, double sigma = 1.0) {
    double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    double u2 = uniform();
    double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    return mean + sigma * z;
  }

  Tensor normal_tensor(const std::vector<int>& shape, double sigma) {
    Tensor t{shape};
    for (int i = 0; i < t.size(); ++i) t[i] = normal(0.0, sigma);
    return t;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      int j = uniform_int(i + 1);
      std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(j)]);
    }
  }

 private:
  uint64_t state_;
};

inline uint64_t mix64(uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Derives a named substream key; results depend only on (seed, tags), never on
// call order, so parallel work can own independent streams.
inline uint64_t derive_stream(uint64_t seed, std::initializer_list<uint64_t> tags) {
  uint64_t s = mix64(seed ^ 0x6a09e667f3bcc909ULL);
  for (uint64_t t : tags) s = mix64(s ^ (t + 0x9e3779b97f4a7c15ULL));
  return s;
}

}  // namespace dance
