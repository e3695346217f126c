// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.
#include <immintrin.h>

#include "kernels_impl.hpp"

namespace flsim::kernels::detail {

namespace {

inline double horizontal_sum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d swapped = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, swapped));
}

}  // namespace

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double acc = horizontal_sum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void axpby_avx2(double alpha, const double* x, double beta, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  const __m256d vb = _mm256_set1_pd(beta);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d scaled = _mm256_mul_pd(va, _mm256_loadu_pd(y + i));
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(vb, _mm256_loadu_pd(x + i), scaled));
  }
  for (; i < n; ++i) y[i] = alpha * y[i] + beta * x[i];
}

void sgd_update_avx2(double* theta, double* velocity, const double* grad, std::size_t n,
                     double lr, double momentum, double weight_decay) {
  const __m256d vm = _mm256_set1_pd(momentum);
  const __m256d vwd = _mm256_set1_pd(weight_decay);
  const __m256d vlr = _mm256_set1_pd(lr);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d t = _mm256_loadu_pd(theta + i);
    __m256d v = _mm256_loadu_pd(velocity + i);
    __m256d g = _mm256_loadu_pd(grad + i);
    v = _mm256_add_pd(_mm256_fmadd_pd(vm, v, g), _mm256_mul_pd(vwd, t));
    t = _mm256_fnmadd_pd(vlr, v, t);
    _mm256_storeu_pd(velocity + i, v);
    _mm256_storeu_pd(theta + i, t);
  }
  for (; i < n; ++i) {
    velocity[i] = momentum * velocity[i] + grad[i] + weight_decay * theta[i];
    theta[i] -= lr * velocity[i];
  }
}

double squared_distance_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc = _mm256_fmadd_pd(d, d, acc);
  }
  double total = horizontal_sum(acc);
  for (; i < n; ++i) {
    double d = a[i] - b[i];
    total += d * d;
  }
  return total;
}

}  // namespace flsim::kernels::detail
