#include "gasa/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "gasa/error.hpp"
#include "gasa/kernels.hpp"

namespace gasa::ops {
namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw Error(ErrorKind::ShapeMismatch, std::string(op) + ": " + shape_str(a.shape()) + " vs " +
                                              shape_str(b.shape()));
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank)
    throw Error(ErrorKind::ShapeMismatch, std::string(op) + ": expected rank " +
                                              std::to_string(rank) + ", got " + shape_str(t.shape()));
}

std::vector<double> copy_values(const Tensor& t) {
  auto v = t.values();
  return {v.begin(), v.end()};
}

// Shared by layer_norm (gamma per column) and instance_norm (gamma per row).
struct NormStats {
  std::vector<double> xhat;
  std::vector<double> inv_std;
};

NormStats normalize_rows(std::span<const double> x, std::size_t rows, std::size_t len, double eps) {
  NormStats s;
  s.xhat.resize(x.size());
  s.inv_std.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * len;
    double mu = 0.0;
    for (std::size_t i = 0; i < len; ++i) mu += xr[i];
    mu /= static_cast<double>(len);
    double var = 0.0;
    for (std::size_t i = 0; i < len; ++i) var += (xr[i] - mu) * (xr[i] - mu);
    var /= static_cast<double>(len);
    const double inv = 1.0 / std::sqrt(var + eps);
    s.inv_std[r] = inv;
    double* hr = s.xhat.data() + r * len;
    for (std::size_t i = 0; i < len; ++i) hr[i] = (xr[i] - mu) * inv;
  }
  return s;
}

// gx = inv_std * (gh - mean(gh) - xhat * mean(gh * xhat)) per row, accumulated.
void normalize_rows_backward(const std::vector<double>& gh, const NormStats& s, std::size_t rows,
                             std::size_t len, double* gx) {
  const double n = static_cast<double>(len);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* g = gh.data() + r * len;
    const double* h = s.xhat.data() + r * len;
    double mg = 0.0, mgh = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      mg += g[i];
      mgh += g[i] * h[i];
    }
    mg /= n;
    mgh /= n;
    double* out = gx + r * len;
    for (std::size_t i = 0; i < len; ++i) out[i] += s.inv_std[r] * (g[i] - mg - h[i] * mgh);
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  auto out = copy_values(a);
  auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return make_result(a.shape(), std::move(out), {a, b},
                     [a, b](std::span<const double> g, std::span<const double>) {
                       if (double* ga = grad_sink(a))
                         for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                       if (double* gb = grad_sink(b))
                         for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
                     });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  auto out = copy_values(a);
  auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return make_result(a.shape(), std::move(out), {a, b},
                     [a, b](std::span<const double> g, std::span<const double>) {
                       if (double* ga = grad_sink(a))
                         for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                       if (double* gb = grad_sink(b))
                         for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                     });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  auto out = copy_values(a);
  auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return make_result(a.shape(), std::move(out), {a, b},
                     [a, b](std::span<const double> g, std::span<const double>) {
                       auto av = a.values();
                       auto bv = b.values();
                       if (double* ga = grad_sink(a))
                         for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
                       if (double* gb = grad_sink(b))
                         for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
                     });
}

Tensor scale(const Tensor& a, double s) {
  auto out = copy_values(a);
  for (auto& v : out) v *= s;
  return make_result(a.shape(), std::move(out), {a},
                     [a, s](std::span<const double> g, std::span<const double>) {
                       if (double* ga = grad_sink(a))
                         for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
                     });
}

Tensor add_row_bias(const Tensor& x, const Tensor& bias) {
  require_rank(x, 2, "add_row_bias");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (bias.numel() != n)
    throw Error(ErrorKind::ShapeMismatch, "add_row_bias: bias " + shape_str(bias.shape()) +
                                              " vs rows of width " + std::to_string(n));
  auto out = copy_values(x);
  auto bv = bias.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
  return make_result(x.shape(), std::move(out), {x, bias},
                     [x, bias, m, n](std::span<const double> g, std::span<const double>) {
                       if (double* gx = grad_sink(x))
                         for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                       if (double* gb = grad_sink(bias))
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
                     });
}

Tensor sum(const Tensor& a) {
  auto v = a.values();
  const double s = std::accumulate(v.begin(), v.end(), 0.0);
  return make_result({1}, {s}, {a}, [a](std::span<const double> g, std::span<const double>) {
    if (double* ga = grad_sink(a))
      for (std::size_t i = 0; i < a.numel(); ++i) ga[i] += g[0];
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

namespace {
thread_local KinkRecorder* active_recorder = nullptr;
}

KinkRecorder::KinkRecorder() { active_recorder = this; }
KinkRecorder::~KinkRecorder() { active_recorder = nullptr; }

Tensor leaky_relu(const Tensor& x, double slope) {
  auto out = copy_values(x);
  for (auto& v : out)
    if (v < 0.0) v *= slope;
  if (KinkRecorder* rec = active_recorder) {
    std::uint64_t h = rec->hash_;
    for (double v : x.values()) h = (h ^ (v < 0.0 ? 0x9e37u : 0x51u)) * 1099511628211ull;
    rec->hash_ = h;
  }
  return make_result(x.shape(), std::move(out), {x},
                     [x, slope](std::span<const double> g, std::span<const double>) {
                       if (double* gx = grad_sink(x)) {
                         auto xv = x.values();
                         for (std::size_t i = 0; i < g.size(); ++i)
                           gx[i] += xv[i] < 0.0 ? slope * g[i] : g[i];
                       }
                     });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw Error(ErrorKind::ShapeMismatch,
                "matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  std::vector<double> out(m * n, 0.0);
  kernels::gemm(kernels::Trans::No, kernels::Trans::No, m, n, k, a.values().data(), k,
                b.values().data(), n, out.data(), n);
  return make_result({m, n}, std::move(out), {a, b},
                     [a, b, m, n, k](std::span<const double> g, std::span<const double>) {
                       using kernels::Trans;
                       if (double* ga = grad_sink(a))
                         kernels::gemm(Trans::No, Trans::Yes, m, k, n, g.data(), n,
                                       b.values().data(), n, ga, k);
                       if (double* gb = grad_sink(b))
                         kernels::gemm(Trans::Yes, Trans::No, k, n, m, a.values().data(), k,
                                       g.data(), n, gb, n);
                     });
}

Tensor transpose(const Tensor& a) { return permute(a, {1, 0}); }

Tensor softmax_lastdim(const Tensor& t) {
  if (t.rank() == 0) throw Error(ErrorKind::ShapeMismatch, "softmax_lastdim on rank-0 tensor");
  const std::size_t len = t.shape().back();
  const std::size_t rows = t.numel() / len;
  auto x = t.values();
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * len;
    double* yr = out.data() + r * len;
    double mx = -std::numeric_limits<double>::infinity();
    bool has_nan = false;
    for (std::size_t i = 0; i < len; ++i) {
      has_nan |= std::isnan(xr[i]);
      mx = std::max(mx, xr[i]);
    }
    if (has_nan) {
      std::fill(yr, yr + len, std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    double z = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      yr[i] = std::exp(xr[i] - mx);
      z += yr[i];
    }
    for (std::size_t i = 0; i < len; ++i) yr[i] /= z;
  }
  return make_result(t.shape(), std::move(out), {t},
                     [t, rows, len](std::span<const double> g, std::span<const double> y) {
                       double* gx = grad_sink(t);
                       if (!gx) return;
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* gr = g.data() + r * len;
                         const double* yr = y.data() + r * len;
                         double dotgy = 0.0;
                         for (std::size_t i = 0; i < len; ++i) dotgy += gr[i] * yr[i];
                         for (std::size_t i = 0; i < len; ++i)
                           gx[r * len + i] += yr[i] * (gr[i] - dotgy);
                       }
                     });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.rank() == 0) throw Error(ErrorKind::ShapeMismatch, "layer_norm on rank-0 tensor");
  const std::size_t len = x.shape().back();
  if (gamma.numel() != len || beta.numel() != len)
    throw Error(ErrorKind::ShapeMismatch, "layer_norm: gamma/beta must have " +
                                              std::to_string(len) + " elements");
  const std::size_t rows = x.numel() / len;
  auto stats = std::make_shared<NormStats>(normalize_rows(x.values(), rows, len, eps));
  std::vector<double> out(x.numel());
  auto gv = gamma.values(), bv = beta.values();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < len; ++i)
      out[r * len + i] = gv[i] * stats->xhat[r * len + i] + bv[i];
  return make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [x, gamma, beta, stats, rows, len](std::span<const double> g, std::span<const double>) {
        auto gv = gamma.values();
        if (double* gg = grad_sink(gamma))
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t i = 0; i < len; ++i) gg[i] += g[r * len + i] * stats->xhat[r * len + i];
        if (double* gb = grad_sink(beta))
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t i = 0; i < len; ++i) gb[i] += g[r * len + i];
        if (double* gx = grad_sink(x)) {
          std::vector<double> gh(g.size());
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t i = 0; i < len; ++i) gh[r * len + i] = g[r * len + i] * gv[i];
          normalize_rows_backward(gh, *stats, rows, len, gx);
        }
      });
}

Tensor instance_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.rank() < 2) throw Error(ErrorKind::ShapeMismatch, "instance_norm needs [C, ...] input");
  const std::size_t rows = x.dim(0);
  const std::size_t len = x.numel() / rows;
  if (gamma.numel() != rows || beta.numel() != rows)
    throw Error(ErrorKind::ShapeMismatch, "instance_norm: gamma/beta must have " +
                                              std::to_string(rows) + " elements");
  auto stats = std::make_shared<NormStats>(normalize_rows(x.values(), rows, len, eps));
  std::vector<double> out(x.numel());
  auto gv = gamma.values(), bv = beta.values();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < len; ++i)
      out[r * len + i] = gv[r] * stats->xhat[r * len + i] + bv[r];
  return make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [x, gamma, beta, stats, rows, len](std::span<const double> g, std::span<const double>) {
        auto gv = gamma.values();
        double* gg = grad_sink(gamma);
        double* gb = grad_sink(beta);
        for (std::size_t r = 0; r < rows; ++r) {
          double sg = 0.0, sgh = 0.0;
          for (std::size_t i = 0; i < len; ++i) {
            sg += g[r * len + i];
            sgh += g[r * len + i] * stats->xhat[r * len + i];
          }
          if (gg) gg[r] += sgh;
          if (gb) gb[r] += sg;
        }
        if (double* gx = grad_sink(x)) {
          std::vector<double> gh(g.size());
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t i = 0; i < len; ++i) gh[r * len + i] = g[r * len + i] * gv[r];
          normalize_rows_backward(gh, *stats, rows, len, gx);
        }
      });
}

Tensor dropout(const Tensor& x, double p, bool training, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0))
    throw Error(ErrorKind::InvalidProbability, "dropout p must lie in [0, 1), got " + std::to_string(p));
  if (!training || p == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - p);
  auto mask = std::make_shared<std::vector<double>>(x.numel());
  auto out = copy_values(x);
  for (std::size_t i = 0; i < out.size(); ++i) {
    (*mask)[i] = rng.uniform() < p ? 0.0 : keep_scale;
    out[i] *= (*mask)[i];
  }
  return make_result(x.shape(), std::move(out), {x},
                     [x, mask](std::span<const double> g, std::span<const double>) {
                       if (double* gx = grad_sink(x))
                         for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (*mask)[i];
                     });
}

Tensor upsample_nearest(const Tensor& x, const Extents3& f) {
  require_rank(x, 4, "upsample_nearest");
  if (f[0] == 0 || f[1] == 0 || f[2] == 0)
    throw Error(ErrorKind::ShapeMismatch, "upsample_nearest: zero factor");
  const std::size_t c = x.dim(0), w = x.dim(1), h = x.dim(2), d = x.dim(3);
  const std::size_t W = w * f[0], H = h * f[1], D = d * f[2];
  auto xv = x.values();
  std::vector<double> out(c * W * H * D);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < W; ++i)
      for (std::size_t j = 0; j < H; ++j) {
        const double* src = xv.data() + ((ch * w + i / f[0]) * h + j / f[1]) * d;
        double* dst = out.data() + ((ch * W + i) * H + j) * D;
        for (std::size_t k = 0; k < D; ++k) dst[k] = src[k / f[2]];
      }
  return make_result({c, W, H, D}, std::move(out), {x},
                     [x, f, c, w, h, d, W, H, D](std::span<const double> g, std::span<const double>) {
                       double* gx = grad_sink(x);
                       if (!gx) return;
                       for (std::size_t ch = 0; ch < c; ++ch)
                         for (std::size_t i = 0; i < W; ++i)
                           for (std::size_t j = 0; j < H; ++j) {
                             double* dst = gx + ((ch * w + i / f[0]) * h + j / f[1]) * d;
                             const double* src = g.data() + ((ch * W + i) * H + j) * D;
                             for (std::size_t k = 0; k < D; ++k) dst[k / f[2]] += src[k];
                           }
                     });
}

Tensor reshape(const Tensor& t, Shape shape) {
  if (shape_numel(shape) != t.numel())
    throw Error(ErrorKind::ShapeMismatch,
                "reshape " + shape_str(t.shape()) + " -> " + shape_str(shape));
  return make_result(std::move(shape), copy_values(t), {t},
                     [t](std::span<const double> g, std::span<const double>) {
                       if (double* gt = grad_sink(t))
                         for (std::size_t i = 0; i < g.size(); ++i) gt[i] += g[i];
                     });
}

Tensor permute(const Tensor& t, const std::vector<std::size_t>& axes) {
  const std::size_t rank = t.rank();
  if (axes.size() != rank)
    throw Error(ErrorKind::ShapeMismatch, "permute: axis list does not match rank");
  std::vector<bool> seen(rank, false);
  for (auto a : axes) {
    if (a >= rank || seen[a]) throw Error(ErrorKind::ShapeMismatch, "permute: invalid axis list");
    seen[a] = true;
  }
  const Shape& in_shape = t.shape();
  Shape out_shape(rank);
  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_strides[i - 1] = in_strides[i] * in_shape[i];
  for (std::size_t i = 0; i < rank; ++i) out_shape[i] = in_shape[axes[i]];
  // src_index[o] for every output offset o.
  auto src_index = std::make_shared<std::vector<std::size_t>>(t.numel());
  std::vector<std::size_t> counter(rank, 0);
  for (std::size_t o = 0; o < t.numel(); ++o) {
    std::size_t src = 0;
    for (std::size_t i = 0; i < rank; ++i) src += counter[i] * in_strides[axes[i]];
    (*src_index)[o] = src;
    for (std::size_t i = rank; i-- > 0;) {
      if (++counter[i] < out_shape[i]) break;
      counter[i] = 0;
    }
  }
  auto tv = t.values();
  std::vector<double> out(t.numel());
  for (std::size_t o = 0; o < out.size(); ++o) out[o] = tv[(*src_index)[o]];
  return make_result(std::move(out_shape), std::move(out), {t},
                     [t, src_index](std::span<const double> g, std::span<const double>) {
                       if (double* gt = grad_sink(t))
                         for (std::size_t o = 0; o < g.size(); ++o) gt[(*src_index)[o]] += g[o];
                     });
}

Tensor concat0(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw Error(ErrorKind::ShapeMismatch, "concat0 of nothing");
  Shape shape = parts.front().shape();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.rank() != shape.size() || !std::equal(p.shape().begin() + 1, p.shape().end(), shape.begin() + 1))
      throw Error(ErrorKind::ShapeMismatch, "concat0: " + shape_str(p.shape()) + " vs " + shape_str(shape));
    rows += p.dim(0);
  }
  shape[0] = rows;
  std::vector<double> out;
  out.reserve(shape_numel(shape));
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  return make_result(std::move(shape), std::move(out), parts,
                     [parts](std::span<const double> g, std::span<const double>) {
                       std::size_t offset = 0;
                       for (const auto& p : parts) {
                         if (double* gp = grad_sink(p))
                           for (std::size_t i = 0; i < p.numel(); ++i) gp[i] += g[offset + i];
                         offset += p.numel();
                       }
                     });
}

Tensor slice0(const Tensor& t, std::size_t begin, std::size_t end) {
  if (t.rank() == 0 || begin >= end || end > t.dim(0))
    throw Error(ErrorKind::ShapeMismatch, "slice0 [" + std::to_string(begin) + "," +
                                              std::to_string(end) + ") of " + shape_str(t.shape()));
  const std::size_t row = t.numel() / t.dim(0);
  Shape shape = t.shape();
  shape[0] = end - begin;
  auto tv = t.values();
  std::vector<double> out(tv.begin() + begin * row, tv.begin() + end * row);
  return make_result(std::move(shape), std::move(out), {t},
                     [t, begin, row](std::span<const double> g, std::span<const double>) {
                       if (double* gt = grad_sink(t))
                         for (std::size_t i = 0; i < g.size(); ++i) gt[begin * row + i] += g[i];
                     });
}

Tensor slice_cols(const Tensor& t, std::size_t begin, std::size_t end) {
  require_rank(t, 2, "slice_cols");
  const std::size_t m = t.dim(0), n = t.dim(1);
  if (begin >= end || end > n)
    throw Error(ErrorKind::ShapeMismatch, "slice_cols out of range for " + shape_str(t.shape()));
  const std::size_t w = end - begin;
  auto tv = t.values();
  std::vector<double> out(m * w);
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(tv.data() + i * n + begin, w, out.data() + i * w);
  return make_result({m, w}, std::move(out), {t},
                     [t, m, n, w, begin](std::span<const double> g, std::span<const double>) {
                       if (double* gt = grad_sink(t))
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < w; ++j) gt[i * n + begin + j] += g[i * w + j];
                     });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw Error(ErrorKind::ShapeMismatch, "concat_cols of nothing");
  const std::size_t m = parts.front().dim(0);
  std::size_t n = 0;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_cols");
    if (p.dim(0) != m) throw Error(ErrorKind::ShapeMismatch, "concat_cols: row count mismatch");
    n += p.dim(1);
  }
  std::vector<double> out(m * n);
  std::size_t col = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.dim(1);
    auto pv = p.values();
    for (std::size_t i = 0; i < m; ++i) std::copy_n(pv.data() + i * w, w, out.data() + i * n + col);
    col += w;
  }
  return make_result({m, n}, std::move(out), parts,
                     [parts, m, n](std::span<const double> g, std::span<const double>) {
                       std::size_t col = 0;
                       for (const auto& p : parts) {
                         const std::size_t w = p.dim(1);
                         if (double* gp = grad_sink(p))
                           for (std::size_t i = 0; i < m; ++i)
                             for (std::size_t j = 0; j < w; ++j) gp[i * w + j] += g[i * n + col + j];
                         col += w;
                       }
                     });
}

}  // namespace gasa::ops
