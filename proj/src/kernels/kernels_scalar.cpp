#include "kernels_impl.hpp"

namespace gasa::kernels::scalar {
namespace {

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const double* a,
          std::size_t lda, const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  auto a_at = [&](std::size_t i, std::size_t p) {
    return ta == Trans::No ? a[i * lda + p] : a[p * lda + i];
  };
  if (tb == Trans::No) {
    for (std::size_t i = 0; i < m; ++i) {
      double* crow = c + i * ldc;
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = a_at(i, p);
        const double* brow = b + p * ldb;
        for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
      }
    }
    return;
  }
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double* bcol = b + j * ldb;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a_at(i, p) * bcol[p];
      c[i * ldc + j] += acc;
    }
  }
}

double dot(const double* x, const double* y, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace

const KernelTable table{&gemm, &dot, &axpy};

}  // namespace gasa::kernels::scalar
