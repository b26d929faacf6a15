// Compiled with -mavx2 -mfma; only reached when CPUID reports both.

#include <immintrin.h>

#include <algorithm>
#include <vector>

#include "kernels_impl.hpp"

namespace gasa::kernels::avx2 {
namespace {

constexpr std::size_t kMr = 4;
constexpr std::size_t kNr = 8;
constexpr std::size_t kKc = 256;

// Packs rows [i0, i0+kMr) x cols [p0, p0+kc) of op(A) as [p][r], zero-padded.
void pack_a(Trans ta, const double* a, std::size_t lda, std::size_t m, std::size_t i0,
            std::size_t p0, std::size_t kc, double* dst) {
  const std::size_t rows = std::min(kMr, m - i0);
  for (std::size_t p = 0; p < kc; ++p) {
    for (std::size_t r = 0; r < kMr; ++r) {
      double v = 0.0;
      if (r < rows) {
        const std::size_t i = i0 + r;
        const std::size_t pp = p0 + p;
        v = ta == Trans::No ? a[i * lda + pp] : a[pp * lda + i];
      }
      dst[p * kMr + r] = v;
    }
  }
}

// Packs rows [p0, p0+kc) x cols [j0, j0+kNr) of op(B) as [p][c], zero-padded.
void pack_b(Trans tb, const double* b, std::size_t ldb, std::size_t n, std::size_t j0,
            std::size_t p0, std::size_t kc, double* dst) {
  const std::size_t cols = std::min(kNr, n - j0);
  if (tb == Trans::No && cols == kNr) {
    for (std::size_t p = 0; p < kc; ++p) {
      const double* src = b + (p0 + p) * ldb + j0;
      _mm256_storeu_pd(dst + p * kNr, _mm256_loadu_pd(src));
      _mm256_storeu_pd(dst + p * kNr + 4, _mm256_loadu_pd(src + 4));
    }
    return;
  }
  for (std::size_t p = 0; p < kc; ++p) {
    for (std::size_t c = 0; c < kNr; ++c) {
      double v = 0.0;
      if (c < cols) {
        const std::size_t j = j0 + c;
        const std::size_t pp = p0 + p;
        v = tb == Trans::No ? b[pp * ldb + j] : b[j * ldb + pp];
      }
      dst[p * kNr + c] = v;
    }
  }
}

void micro_4x8(std::size_t kc, const double* ap, const double* bp, double* c, std::size_t ldc,
               std::size_t rows, std::size_t cols) {
  __m256d c00 = _mm256_setzero_pd(), c01 = _mm256_setzero_pd();
  __m256d c10 = _mm256_setzero_pd(), c11 = _mm256_setzero_pd();
  __m256d c20 = _mm256_setzero_pd(), c21 = _mm256_setzero_pd();
  __m256d c30 = _mm256_setzero_pd(), c31 = _mm256_setzero_pd();
  for (std::size_t p = 0; p < kc; ++p) {
    const __m256d b0 = _mm256_loadu_pd(bp + p * kNr);
    const __m256d b1 = _mm256_loadu_pd(bp + p * kNr + 4);
    const double* a = ap + p * kMr;
    __m256d av = _mm256_broadcast_sd(a + 0);
    c00 = _mm256_fmadd_pd(av, b0, c00);
    c01 = _mm256_fmadd_pd(av, b1, c01);
    av = _mm256_broadcast_sd(a + 1);
    c10 = _mm256_fmadd_pd(av, b0, c10);
    c11 = _mm256_fmadd_pd(av, b1, c11);
    av = _mm256_broadcast_sd(a + 2);
    c20 = _mm256_fmadd_pd(av, b0, c20);
    c21 = _mm256_fmadd_pd(av, b1, c21);
    av = _mm256_broadcast_sd(a + 3);
    c30 = _mm256_fmadd_pd(av, b0, c30);
    c31 = _mm256_fmadd_pd(av, b1, c31);
  }
  if (rows == kMr && cols == kNr) {
    const __m256d acc[kMr][2] = {{c00, c01}, {c10, c11}, {c20, c21}, {c30, c31}};
    for (std::size_t r = 0; r < kMr; ++r) {
      double* row = c + r * ldc;
      _mm256_storeu_pd(row, _mm256_add_pd(_mm256_loadu_pd(row), acc[r][0]));
      _mm256_storeu_pd(row + 4, _mm256_add_pd(_mm256_loadu_pd(row + 4), acc[r][1]));
    }
    return;
  }
  alignas(32) double tmp[kMr][kNr];
  _mm256_store_pd(tmp[0], c00);
  _mm256_store_pd(tmp[0] + 4, c01);
  _mm256_store_pd(tmp[1], c10);
  _mm256_store_pd(tmp[1] + 4, c11);
  _mm256_store_pd(tmp[2], c20);
  _mm256_store_pd(tmp[2] + 4, c21);
  _mm256_store_pd(tmp[3], c30);
  _mm256_store_pd(tmp[3] + 4, c31);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t cc = 0; cc < cols; ++cc) c[r * ldc + cc] += tmp[r][cc];
}

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const double* a,
          std::size_t lda, const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  if (m == 0 || n == 0 || k == 0) return;
  const std::size_t m_blocks = (m + kMr - 1) / kMr;
  thread_local std::vector<double> apack;
  thread_local std::vector<double> bpack;
  for (std::size_t p0 = 0; p0 < k; p0 += kKc) {
    const std::size_t kc = std::min(kKc, k - p0);
    apack.resize(m_blocks * kc * kMr);
    bpack.resize(kc * kNr);
    for (std::size_t ib = 0; ib < m_blocks; ++ib)
      pack_a(ta, a, lda, m, ib * kMr, p0, kc, apack.data() + ib * kc * kMr);
    for (std::size_t j0 = 0; j0 < n; j0 += kNr) {
      pack_b(tb, b, ldb, n, j0, p0, kc, bpack.data());
      const std::size_t cols = std::min(kNr, n - j0);
      for (std::size_t ib = 0; ib < m_blocks; ++ib) {
        const std::size_t i0 = ib * kMr;
        micro_4x8(kc, apack.data() + ib * kc * kMr, bpack.data(), c + i0 * ldc + j0, ldc,
                  std::min(kMr, m - i0), cols);
      }
    }
  }
}

double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot(const double* x, const double* y, std::size_t n) {
  __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    a0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), a0);
    a1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), a1);
  }
  for (; i + 4 <= n; i += 4)
    a0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), a0);
  double acc = hsum(_mm256_add_pd(a0, a1));
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace

const KernelTable table{&gemm, &dot, &axpy};

}  // namespace gasa::kernels::avx2
