#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <random>

namespace emtest {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Derives an independent stream seed from (seed, stream). Replicates, grid
// points and Monte Carlo draws each own a stream, so results never depend on
// scheduling order or thread count.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t s = seed;
  std::uint64_t a = splitmix64(s);
  s ^= 0x94d049bb133111ebULL * (stream + 1);
  std::uint64_t b = splitmix64(s);
  return a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
}

// Seeded generator with self-contained transforms. The engine is the fully
// specified std::mt19937_64, but all distributions are implemented here so a
// stream is reproducible regardless of the standard library in use.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // Uniform on [0, 1).
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; consumes exactly two engine draws.
  double normal() {
    const double u1 = static_cast<double>((gen_() >> 11) + 1) * 0x1.0p-53;  // (0,1]
    const double u2 = uniform();
    constexpr double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

  // Index draw from unnormalized nonnegative weights.
  int categorical(const Eigen::VectorXd& weights) {
    const double u = uniform() * weights.sum();
    double acc = 0.0;
    for (int k = 0; k < weights.size(); ++k) {
      acc += weights[k];
      if (u < acc) return k;
    }
    return static_cast<int>(weights.size()) - 1;
  }

  Eigen::VectorXd normal_vector(int d) {
    Eigen::VectorXd z(d);
    for (int i = 0; i < d; ++i) z[i] = normal();
    return z;
  }

  Eigen::VectorXd unit_sphere(int d) {
    while (true) {
      Eigen::VectorXd z = normal_vector(d);
      const double n = z.norm();
      if (n > 1e-12) return z / n;
    }
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace emtest
