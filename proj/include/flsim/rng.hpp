#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace flsim {

// Stable 64-bit FNV-1a hash; used to derive named random streams.
std::uint64_t fnv1a64(std::string_view text);

// Seed for the stream `name` under the run seed `seed`. Independent of the
// order in which streams are created, so adding a stream never perturbs
// another one.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view name);

// Reproducible random stream. The engine is std::mt19937_64, whose output
// sequence is fixed by the standard; all distributions are implemented here
// instead of using <random> distributions, which are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  static Rng stream(std::uint64_t seed, std::string_view name) {
    return Rng(derive_seed(seed, name));
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  // Uniform in (0, 1); never returns zero.
  double uniform_open();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n); n must be positive.
  std::size_t index(std::size_t n);
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Natural log of a Gamma(shape, 1) draw (Marsaglia-Tsang). Working in log
  // space keeps tiny shapes such as 0.01 from underflowing to zero.
  double log_gamma_variate(double shape);
  // Point on the simplex drawn from Dirichlet(alpha * 1).
  std::vector<double> dirichlet(std::size_t dims, double alpha);

  template <typename T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(values[i - 1], values[j]);
    }
  }

  template <typename T>
  void shuffle(std::vector<T>& values) {
    shuffle(std::span<T>(values));
  }

  std::vector<std::size_t> permutation(std::size_t n);

 private:
  std::mt19937_64 engine_;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

}  // namespace flsim
