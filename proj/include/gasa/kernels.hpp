#pragma once

// Dense f64 inner loops behind the tensor ops. Every routine has a scalar
// reference variant and, on x86-64 builds, an AVX2/FMA variant; the variant is
// chosen once at startup from CPUID and can be overridden with the
// GASA_KERNELS=scalar|avx2 environment variable or set_isa().

#include <cstddef>
#include <string_view>

namespace gasa::kernels {

enum class Isa { Scalar, Avx2 };

enum class Trans { No, Yes };

bool isa_supported(Isa isa);
Isa active_isa();
// Throws gasa::Error(InvalidConfig) when the requested variant is unavailable.
void set_isa(Isa isa);
std::string_view isa_name(Isa isa);

/// C(m,n) += op(A)(m,k) * op(B)(k,n); all operands row-major with explicit
/// leading dimensions. op(X) is X or its transpose.
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k,
          const double* a, std::size_t lda, const double* b, std::size_t ldb,
          double* c, std::size_t ldc);

double dot(const double* x, const double* y, std::size_t n);

/// y += alpha * x
void axpy(double alpha, const double* x, double* y, std::size_t n);

// Direct access to a specific variant, used by the equivalence tests.
void gemm_with(Isa isa, Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k,
               const double* a, std::size_t lda, const double* b, std::size_t ldb,
               double* c, std::size_t ldc);
double dot_with(Isa isa, const double* x, const double* y, std::size_t n);
void axpy_with(Isa isa, double alpha, const double* x, double* y, std::size_t n);

// RAII override of the active variant (tests and benchmarks).
class ScopedIsa {
 public:
  explicit ScopedIsa(Isa isa) : previous_(active_isa()) { set_isa(isa); }
  ~ScopedIsa() { set_isa(previous_); }
  ScopedIsa(const ScopedIsa&) = delete;
  ScopedIsa& operator=(const ScopedIsa&) = delete;

 private:
  Isa previous_;
};

}  // namespace gasa::kernels
