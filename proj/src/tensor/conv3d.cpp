#include <memory>

#include "gasa/error.hpp"
#include "gasa/kernels.hpp"
#include "gasa/ops.hpp"

namespace gasa::ops {
namespace {

struct ConvGeometry {
  std::size_t cin, w, h, d;
  std::size_t cout, kw, kh, kd;
  Extents3 stride, pad;
  std::size_t ow, oh, od;

  std::size_t patch() const { return cin * kw * kh * kd; }
  std::size_t out_voxels() const { return ow * oh * od; }
  bool pointwise() const {
    return kw == 1 && kh == 1 && kd == 1 && stride == Extents3{1, 1, 1} && pad == Extents3{0, 0, 0};
  }
};

std::size_t out_extent(std::size_t in, std::size_t k, std::size_t s, std::size_t p) {
  return (in + 2 * p - k) / s + 1;
}

// col[(c,kx,ky,kz), (ox,oy,oz)]; out-of-range taps read as zero.
void im2col(const ConvGeometry& g, const double* x, double* col) {
  const std::size_t n = g.out_voxels();
  for (std::size_t c = 0; c < g.cin; ++c)
    for (std::size_t kx = 0; kx < g.kw; ++kx)
      for (std::size_t ky = 0; ky < g.kh; ++ky)
        for (std::size_t kz = 0; kz < g.kd; ++kz) {
          double* dst = col + (((c * g.kw + kx) * g.kh + ky) * g.kd + kz) * n;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride[0] + kx) -
                                      static_cast<std::ptrdiff_t>(g.pad[0]);
            double* dx = dst + ox * g.oh * g.od;
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) {
              std::fill_n(dx, g.oh * g.od, 0.0);
              continue;
            }
            for (std::size_t oy = 0; oy < g.oh; ++oy) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride[1] + ky) -
                                        static_cast<std::ptrdiff_t>(g.pad[1]);
              double* dy = dx + oy * g.od;
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
                std::fill_n(dy, g.od, 0.0);
                continue;
              }
              const double* src = x + ((c * g.w + static_cast<std::size_t>(ix)) * g.h +
                                       static_cast<std::size_t>(iy)) * g.d;
              for (std::size_t oz = 0; oz < g.od; ++oz) {
                const std::ptrdiff_t iz = static_cast<std::ptrdiff_t>(oz * g.stride[2] + kz) -
                                          static_cast<std::ptrdiff_t>(g.pad[2]);
                dy[oz] = (iz < 0 || iz >= static_cast<std::ptrdiff_t>(g.d))
                             ? 0.0
                             : src[static_cast<std::size_t>(iz)];
              }
            }
          }
        }
}

void col2im_add(const ConvGeometry& g, const double* col, double* gx) {
  const std::size_t n = g.out_voxels();
  for (std::size_t c = 0; c < g.cin; ++c)
    for (std::size_t kx = 0; kx < g.kw; ++kx)
      for (std::size_t ky = 0; ky < g.kh; ++ky)
        for (std::size_t kz = 0; kz < g.kd; ++kz) {
          const double* srcrow = col + (((c * g.kw + kx) * g.kh + ky) * g.kd + kz) * n;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride[0] + kx) -
                                      static_cast<std::ptrdiff_t>(g.pad[0]);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
            for (std::size_t oy = 0; oy < g.oh; ++oy) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride[1] + ky) -
                                        static_cast<std::ptrdiff_t>(g.pad[1]);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
              double* dst = gx + ((c * g.w + static_cast<std::size_t>(ix)) * g.h +
                                  static_cast<std::size_t>(iy)) * g.d;
              const double* src = srcrow + (ox * g.oh + oy) * g.od;
              for (std::size_t oz = 0; oz < g.od; ++oz) {
                const std::ptrdiff_t iz = static_cast<std::ptrdiff_t>(oz * g.stride[2] + kz) -
                                          static_cast<std::ptrdiff_t>(g.pad[2]);
                if (iz >= 0 && iz < static_cast<std::ptrdiff_t>(g.d))
                  dst[static_cast<std::size_t>(iz)] += src[oz];
              }
            }
          }
        }
}

}  // namespace

Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& b, const Conv3dOptions& opt) {
  if (x.rank() != 4 || w.rank() != 5 || b.rank() != 1)
    throw Error(ErrorKind::ShapeMismatch, "conv3d expects x[C,W,H,D], w[Co,Ci,kw,kh,kd], b[Co]; got " +
                                              shape_str(x.shape()) + ", " + shape_str(w.shape()) +
                                              ", " + shape_str(b.shape()));
  ConvGeometry g{};
  g.cin = x.dim(0);
  g.w = x.dim(1);
  g.h = x.dim(2);
  g.d = x.dim(3);
  g.cout = w.dim(0);
  g.kw = w.dim(2);
  g.kh = w.dim(3);
  g.kd = w.dim(4);
  g.stride = opt.stride;
  g.pad = opt.padding;
  if (w.dim(1) != g.cin || b.dim(0) != g.cout)
    throw Error(ErrorKind::ShapeMismatch, "conv3d channel mismatch: x " + shape_str(x.shape()) +
                                              ", w " + shape_str(w.shape()) + ", b " +
                                              shape_str(b.shape()));
  if (g.stride[0] == 0 || g.stride[1] == 0 || g.stride[2] == 0)
    throw Error(ErrorKind::ShapeMismatch, "conv3d stride must be positive");
  const Extents3 in{g.w, g.h, g.d}, k{g.kw, g.kh, g.kd};
  for (int a = 0; a < 3; ++a)
    if (k[a] > in[a] + 2 * g.pad[a])
      throw Error(ErrorKind::KernelTooLarge, "conv3d kernel " + shape_str(w.shape()) +
                                                 " exceeds padded input " + shape_str(x.shape()));
  g.ow = out_extent(g.w, g.kw, g.stride[0], g.pad[0]);
  g.oh = out_extent(g.h, g.kh, g.stride[1], g.pad[1]);
  g.od = out_extent(g.d, g.kd, g.stride[2], g.pad[2]);

  const std::size_t n = g.out_voxels();
  const std::size_t kk = g.patch();
  std::shared_ptr<std::vector<double>> col;
  const double* colp = x.values().data();
  if (!g.pointwise()) {
    col = std::make_shared<std::vector<double>>(kk * n);
    im2col(g, x.values().data(), col->data());
    colp = col->data();
  }
  std::vector<double> out(g.cout * n);
  auto bv = b.values();
  for (std::size_t o = 0; o < g.cout; ++o) std::fill_n(out.data() + o * n, n, bv[o]);
  using kernels::Trans;
  kernels::gemm(Trans::No, Trans::No, g.cout, n, kk, w.values().data(), kk, colp, n, out.data(), n);

  return make_result(
      {g.cout, g.ow, g.oh, g.od}, std::move(out), {x, w, b},
      [x, w, b, g, col](std::span<const double> grad, std::span<const double>) {
        const std::size_t n = g.out_voxels();
        const std::size_t kk = g.patch();
        const double* colp = col ? col->data() : x.values().data();
        if (double* gb = grad_sink(b))
          for (std::size_t o = 0; o < g.cout; ++o) {
            const double* row = grad.data() + o * n;
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += row[i];
            gb[o] += s;
          }
        if (double* gw = grad_sink(w))
          kernels::gemm(Trans::No, Trans::Yes, g.cout, kk, n, grad.data(), n, colp, n, gw, kk);
        if (double* gx = grad_sink(x)) {
          if (g.pointwise()) {
            kernels::gemm(Trans::Yes, Trans::No, kk, n, g.cout, w.values().data(), kk, grad.data(), n,
                          gx, n);
          } else {
            std::vector<double> gcol(kk * n, 0.0);
            kernels::gemm(Trans::Yes, Trans::No, kk, n, g.cout, w.values().data(), kk, grad.data(),
                          n, gcol.data(), n);
            col2im_add(g, gcol.data(), gx);
          }
        }
      });
}

}  // namespace gasa::ops
