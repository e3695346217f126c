#include "flsim/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "flsim/error.hpp"

namespace flsim {

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    hash ^= ch;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view name) {
  // splitmix64 finalizer over the combined value
  std::uint64_t z = seed ^ fnv1a64(name);
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform_open() {
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

std::size_t Rng::index(std::size_t n) {
  if (n == 0) throw PreconditionError("Rng::index: empty range");
  const std::uint64_t bound = n;
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    std::uint64_t x = next_u64();
    if (x >= threshold) return static_cast<std::size_t>(x % bound);
  }
}

double Rng::normal() {
  if (has_cached_normal_) {
    has_cached_normal_ = false;
    return cached_normal_;
  }
  double u1 = uniform_open();
  double u2 = uniform();
  double radius = std::sqrt(-2.0 * std::log(u1));
  double angle = 2.0 * std::numbers::pi * u2;
  cached_normal_ = radius * std::sin(angle);
  has_cached_normal_ = true;
  return radius * std::cos(angle);
}

double Rng::log_gamma_variate(double shape) {
  if (!(shape > 0.0)) throw PreconditionError("gamma shape must be positive");
  if (shape < 1.0) {
    // G(a) = G(a + 1) * U^(1/a)
    double boosted = log_gamma_variate(shape + 1.0);
    return boosted + std::log(uniform_open()) / shape;
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = normal();
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    double log_u = std::log(uniform_open());
    if (log_u < 0.5 * x * x + d - d * v + d * std::log(v)) return std::log(d * v);
  }
}

std::vector<double> Rng::dirichlet(std::size_t dims, double alpha) {
  std::vector<double> logs(dims);
  for (auto& value : logs) value = log_gamma_variate(alpha);
  const double peak = *std::max_element(logs.begin(), logs.end());
  double total = 0.0;
  for (auto& value : logs) {
    value = std::exp(value - peak);
    total += value;
  }
  for (auto& value : logs) value /= total;
  return logs;
}

std::vector<std::size_t> Rng::permutation(std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  shuffle(order);
  return order;
}

}  // namespace flsim
