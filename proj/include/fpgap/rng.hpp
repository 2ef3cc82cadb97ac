#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace fpgap {

/// Seedable portable generator. The core stream is std::mt19937, whose
/// output sequence is fixed by the ISO standard; all derived distributions
/// below are hand-rolled so results are bit-identical across platforms and
/// standard-library implementations.
class Rng {
 public:
  explicit Rng(std::uint32_t seed) : gen_(seed) {}

  std::uint32_t next_u32() { return gen_(); }

  /// Uniform in [0,1) with 24 random bits (exact in single precision).
  float uniform01f() { return float(next_u32() >> 8) * 0x1p-24f; }

  /// Uniform in [0,1) with 53 random bits.
  double uniform01() {
    std::uint64_t hi = next_u32();
    std::uint64_t lo = next_u32();
    return double(((hi << 32) | lo) >> 11) * 0x1p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Single-precision uniform draw in [-bound, bound].
  float uniform_signed_f(float bound) {
    float u = uniform01f();
    return (2.0f * u - 1.0f) * bound;
  }

  /// Uniform integer in [0, n). Rejection sampling, deterministic per stream.
  std::uint32_t uniform_int(std::uint32_t n) {
    std::uint64_t limit = (std::uint64_t(1) << 32) - ((std::uint64_t(1) << 32) % n);
    std::uint32_t x;
    do {
      x = next_u32();
    } while (x >= limit);
    return x % n;
  }

  /// Box-Muller normal draw.
  double normal(double mean = 0.0, double stddev = 1.0) {
    if (have_spare_) {
      have_spare_ = false;
      return mean + stddev * spare_;
    }
    double u1, u2;
    do {
      u1 = uniform01();
    } while (u1 <= 0.0);
    u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return mean + stddev * r * std::cos(a);
  }

  /// Derive a child seed for an independent stream (splitmix64 mix).
  static std::uint32_t derive(std::uint64_t base, std::uint64_t stream) {
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    z = z ^ (z >> 31);
    return std::uint32_t(z & 0xffffffffULL);
  }

 private:
  std::mt19937 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace fpgap
