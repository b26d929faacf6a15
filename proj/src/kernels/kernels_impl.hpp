#pragma once

#include "gasa/kernels.hpp"

namespace gasa::kernels {

struct KernelTable {
  void (*gemm)(Trans, Trans, std::size_t, std::size_t, std::size_t, const double*, std::size_t,
               const double*, std::size_t, double*, std::size_t);
  double (*dot)(const double*, const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
};

namespace scalar {
extern const KernelTable table;
}

#if defined(GASA_HAVE_AVX2)
namespace avx2 {
extern const KernelTable table;
}
#endif

}  // namespace gasa::kernels
