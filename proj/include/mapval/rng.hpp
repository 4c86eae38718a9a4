#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include <Eigen/Dense>

namespace mapval {

/// SplitMix64 finaliser, used to derive independent stream seeds.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derive a child seed from a parent seed and a path of coordinates.
inline std::uint64_t derive_seed(std::uint64_t parent, std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = mix64(parent);
  for (auto p : path) s = mix64(s ^ mix64(p + 0x632be59bd9b4e019ULL));
  return s;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(mix64(seed)) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  int poisson(double mean) {
    if (!(mean > 0.0)) return 0;
    std::poisson_distribution<int> d(mean);
    return d(engine_);
  }
  Eigen::VectorXd normal_vector(Eigen::Index n) {
    Eigen::VectorXd z(n);
    for (Eigen::Index i = 0; i < n; ++i) z[i] = normal();
    return z;
  }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace mapval
