#pragma once

#include <cstddef>
#include <span>
#include <string_view>

// Dense double-precision inner loops shared by the models, the optimizers and
// the aggregation code. Each kernel has a portable scalar reference and an
// AVX2+FMA variant; the variant is chosen once at runtime from the CPU
// features (override with FLSIM_KERNELS=scalar|avx2).
namespace flsim::kernels {

enum class Isa { kScalar, kAvx2 };

struct KernelTable {
  Isa isa;
  std::string_view name;
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // y = alpha * y + beta * x
  void (*axpby)(double alpha, const double* x, double beta, double* y, std::size_t n);
  // v = momentum * v + g + weight_decay * theta; theta -= lr * v
  void (*sgd_update)(double* theta, double* velocity, const double* grad, std::size_t n,
                     double lr, double momentum, double weight_decay);
  // sum_i (a_i - b_i)^2
  double (*squared_distance)(const double* a, const double* b, std::size_t n);
};

const KernelTable& scalar_table();
// nullptr when the binary was built without AVX2 support or the CPU lacks it.
const KernelTable* avx2_table();

const KernelTable& active();
// Forces a kernel set; returns false if `isa` is unavailable on this machine.
bool select(Isa isa);
bool cpu_has_avx2();

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), y.size());
}

inline void axpby(double alpha, std::span<const double> x, double beta, std::span<double> y) {
  active().axpby(alpha, x.data(), beta, y.data(), y.size());
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  return active().squared_distance(a.data(), b.data(), a.size());
}

}  // namespace flsim::kernels
