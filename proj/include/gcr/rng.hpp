#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

#include "gcr/error.hpp"
#include "gcr/normal.hpp"

namespace gcr {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Seeded stream with named-substream derivation. All distributions are
// built from mt19937_64 bits only, so sequences are identical across
// platforms and standard-library implementations. Every consumer in the
// pipeline derives its own stream from (root seed, tag, indices), which is
// what makes --threads 1 and --threads T runs produce identical output.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : gen_(seed) {}

  static RngStream derive(std::uint64_t root, std::string_view tag,
                          std::uint64_t a = 0, std::uint64_t b = 0) {
    std::uint64_t h = splitmix64(root ^ fnv1a64(tag));
    h = splitmix64(h ^ a);
    h = splitmix64(h ^ b);
    return RngStream(h);
  }

  std::mt19937_64& engine() { return gen_; }

  /// Uniform on the open interval (0,1).
  double uniform() {
    return (static_cast<double>(gen_() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Uniform integer in [0, n). Consumes nothing when n == 1.
  std::uint64_t uniform_index(std::uint64_t n) {
    if (n == 0) throw numeric_error("uniform_index: n must be positive");
    if (n == 1) return 0;
    const std::uint64_t mask = ~0ull >> std::countl_zero(n - 1);
    for (;;) {
      const std::uint64_t v = gen_() & mask;
      if (v < n) return v;
    }
  }

  bool bernoulli(double p) { return uniform() < p; }

  double normal() { return normal_quantile(uniform()); }

  double exponential() { return -std::log(uniform()); }

  /// Marsaglia-Tsang; shape < 1 handled with the boost trick.
  double gamma(double shape) {
    if (!(shape > 0.0)) throw numeric_error("gamma: shape must be positive");
    if (shape < 1.0) {
      return gamma(shape + 1.0) * std::pow(uniform(), 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  double beta(double a, double b) {
    const double x = gamma(a);
    const double y = gamma(b);
    return x / (x + y);
  }

  /// Inversion by sequential search; large means split exactly.
  int poisson(double lambda) {
    if (lambda < 0.0 || !std::isfinite(lambda)) {
      throw numeric_error("poisson: invalid rate");
    }
    if (lambda == 0.0) return 0;
    if (lambda > 500.0) {
      const double half = lambda / 2.0;
      return poisson(half) + poisson(lambda - half);
    }
    const double u = uniform();
    double pmf = std::exp(-lambda);
    double cum = pmf;
    int k = 0;
    while (u > cum) {
      ++k;
      pmf *= lambda / k;
      cum += pmf;
      if (k > 100000) break;  // cumulative rounding guard
    }
    return k;
  }

  int binomial(int trials, double p) {
    int k = 0;
    for (int j = 0; j < trials; ++j) k += bernoulli(p) ? 1 : 0;
    return k;
  }

  /// Standard normal conditioned on x >= a. Rejection from the normal for
  /// central cuts, Robert's exponential envelope in the tail.
  double tnorm_std_lower(double a) {
    if (a <= 0.45) {
      for (;;) {
        const double z = normal();
        if (z >= a) return z;
      }
    }
    const double lambda = 0.5 * (a + std::sqrt(a * a + 4.0));
    for (;;) {
      const double z = a + exponential() / lambda;
      const double d = z - lambda;
      if (uniform() <= std::exp(-0.5 * d * d)) return z;
    }
  }

  /// Normal(mean, sd^2) truncated to [lo, +inf).
  double tnorm_lower(double mean, double sd, double lo) {
    return mean + sd * tnorm_std_lower((lo - mean) / sd);
  }

  /// Normal(mean, sd^2) truncated to (-inf, hi].
  double tnorm_upper(double mean, double sd, double hi) {
    return mean - sd * tnorm_std_lower((mean - hi) / sd);
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace gcr
