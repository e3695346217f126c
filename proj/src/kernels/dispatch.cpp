#include <atomic>
#include <cstdlib>
#include <string_view>

#include "flsim/kernels.hpp"
#include "kernels_impl.hpp"

namespace flsim::kernels {

namespace {

const KernelTable kScalar{
    Isa::kScalar,          "scalar",
    &detail::dot_scalar,   &detail::axpy_scalar,
    &detail::axpby_scalar, &detail::sgd_update_scalar,
    &detail::squared_distance_scalar,
};

#if defined(FLSIM_HAVE_AVX2)
const KernelTable kAvx2{
    Isa::kAvx2,          "avx2",
    &detail::dot_avx2,   &detail::axpy_avx2,
    &detail::axpby_avx2, &detail::sgd_update_avx2,
    &detail::squared_distance_avx2,
};
#endif

const KernelTable* initial_table() {
  const KernelTable* best = avx2_table();
  if (const char* forced = std::getenv("FLSIM_KERNELS")) {
    std::string_view name(forced);
    if (name == "scalar") return &kScalar;
    if (name == "avx2" && best != nullptr) return best;
  }
  return best != nullptr ? best : &kScalar;
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{initial_table()};
  return table;
}

}  // namespace

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable& scalar_table() { return kScalar; }

const KernelTable* avx2_table() {
#if defined(FLSIM_HAVE_AVX2)
  return cpu_has_avx2() ? &kAvx2 : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

bool select(Isa isa) {
  const KernelTable* table = isa == Isa::kScalar ? &kScalar : avx2_table();
  if (table == nullptr) return false;
  current().store(table, std::memory_order_release);
  return true;
}

}  // namespace flsim::kernels
