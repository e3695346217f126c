#pragma once

#include <cstddef>

namespace flsim::kernels::detail {

double dot_scalar(const double* a, const double* b, std::size_t n);
void axpy_scalar(double alpha, const double* x, double* y, std::size_t n);
void axpby_scalar(double alpha, const double* x, double beta, double* y, std::size_t n);
void sgd_update_scalar(double* theta, double* velocity, const double* grad, std::size_t n,
                       double lr, double momentum, double weight_decay);
double squared_distance_scalar(const double* a, const double* b, std::size_t n);

#if defined(FLSIM_HAVE_AVX2)
double dot_avx2(const double* a, const double* b, std::size_t n);
void axpy_avx2(double alpha, const double* x, double* y, std::size_t n);
void axpby_avx2(double alpha, const double* x, double beta, double* y, std::size_t n);
void sgd_update_avx2(double* theta, double* velocity, const double* grad, std::size_t n,
                     double lr, double momentum, double weight_decay);
double squared_distance_avx2(const double* a, const double* b, std::size_t n);
#endif

}  // namespace flsim::kernels::detail
