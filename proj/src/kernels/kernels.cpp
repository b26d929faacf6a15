#include <atomic>
#include <cstdlib>
#include <string>

#include "gasa/error.hpp"
#include "kernels_impl.hpp"

namespace gasa::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(GASA_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable& table_for(Isa isa) {
#if defined(GASA_HAVE_AVX2)
  if (isa == Isa::Avx2) return avx2::table;
#endif
  (void)isa;
  return scalar::table;
}

Isa initial_isa() {
  if (const char* env = std::getenv("GASA_KERNELS")) {
    const std::string v(env);
    if (v == "scalar") return Isa::Scalar;
    if (v == "avx2" && cpu_has_avx2()) return Isa::Avx2;
  }
  return cpu_has_avx2() ? Isa::Avx2 : Isa::Scalar;
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

}  // namespace

bool isa_supported(Isa isa) { return isa == Isa::Scalar || cpu_has_avx2(); }

Isa active_isa() { return current().load(std::memory_order_relaxed); }

void set_isa(Isa isa) {
  if (!isa_supported(isa))
    throw Error(ErrorKind::InvalidConfig, std::string("kernel variant unavailable: ") +
                                              std::string(isa_name(isa)));
  current().store(isa, std::memory_order_relaxed);
}

std::string_view isa_name(Isa isa) { return isa == Isa::Avx2 ? "avx2" : "scalar"; }

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const double* a,
          std::size_t lda, const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  table_for(active_isa()).gemm(ta, tb, m, n, k, a, lda, b, ldb, c, ldc);
}

double dot(const double* x, const double* y, std::size_t n) {
  return table_for(active_isa()).dot(x, y, n);
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  table_for(active_isa()).axpy(alpha, x, y, n);
}

void gemm_with(Isa isa, Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k,
               const double* a, std::size_t lda, const double* b, std::size_t ldb, double* c,
               std::size_t ldc) {
  table_for(isa).gemm(ta, tb, m, n, k, a, lda, b, ldb, c, ldc);
}

double dot_with(Isa isa, const double* x, const double* y, std::size_t n) {
  return table_for(isa).dot(x, y, n);
}

void axpy_with(Isa isa, double alpha, const double* x, double* y, std::size_t n) {
  table_for(isa).axpy(alpha, x, y, n);
}

}  // namespace gasa::kernels
