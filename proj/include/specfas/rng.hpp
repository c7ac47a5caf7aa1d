#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace specfas {

/// Seeded random stream. Independent streams are derived from a base seed
/// plus a path of integers, so per-epoch and per-sample streams do not depend
/// on the order in which they are consumed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);
  static Rng derive(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

  // Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  // Uniform integer in [0, n).
  std::size_t index(std::size_t n);
  double normal(double mean = 0.0, double stddev = 1.0);
  double beta(double a, double b);
  bool bernoulli(double p);

  template <class T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::swap(values[i - 1], values[index(i)]);
    }
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace specfas
