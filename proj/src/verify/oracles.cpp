#include <cmath>
#include <limits>

#include "gasa/error.hpp"
#include "gasa/verify.hpp"

namespace gasa::verify {

std::optional<double> nsd_bruteforce(const Volume& pred, const Volume& gt, const ClassSet& class_set, double tau,
                                     const Spacing& spacing) {
  const Extents3 d = gt.spatial();
  if (pred.spatial() != d) throw Error(ErrorKind::ShapeMismatch, "nsd_bruteforce: extents differ");
  auto in = [&](const Volume& v, long i, long j, long k) {
    if (i < 0 || j < 0 || k < 0 || i >= static_cast<long>(d[0]) || j >= static_cast<long>(d[1]) ||
        k >= static_cast<long>(d[2]))
      return false;
    const int lab = v.label_at((static_cast<std::size_t>(i) * d[1] + static_cast<std::size_t>(j)) * d[2] +
                               static_cast<std::size_t>(k));
    for (int c : class_set)
      if (c == lab) return true;
    return false;
  };
  using P = std::array<long, 3>;
  auto border = [&](const Volume& v) {
    std::vector<P> pts;
    for (long i = 0; i < static_cast<long>(d[0]); ++i)
      for (long j = 0; j < static_cast<long>(d[1]); ++j)
        for (long k = 0; k < static_cast<long>(d[2]); ++k)
          if (in(v, i, j, k) && (!in(v, i - 1, j, k) || !in(v, i + 1, j, k) || !in(v, i, j - 1, k) ||
                                 !in(v, i, j + 1, k) || !in(v, i, j, k - 1) || !in(v, i, j, k + 1)))
            pts.push_back({i, j, k});
    return pts;
  };
  const auto bp = border(pred);
  const auto bg = border(gt);
  if (bp.empty() && bg.empty()) return std::nullopt;
  auto close = [&](const P& a, const std::vector<P>& others) {
    for (const auto& b : others) {
      const double x = static_cast<double>(a[0] - b[0]) * spacing[0];
      const double y = static_cast<double>(a[1] - b[1]) * spacing[1];
      const double z = static_cast<double>(a[2] - b[2]) * spacing[2];
      if (std::sqrt(x * x + y * y + z * z) <= tau) return true;
    }
    return false;
  };
  std::size_t hits = 0;
  for (const auto& p : bp) hits += close(p, bg);
  for (const auto& g : bg) hits += close(g, bp);
  return static_cast<double>(hits) / static_cast<double>(bp.size() + bg.size());
}

std::vector<double> sliding_window_dense(const PatchModel& model, const Tensor& volume,
                                         const SlidingWindowConfig& swc) {
  NoGradGuard no_grad;
  const std::size_t C = volume.dim(0), K = model.num_classes;
  const Extents3 n{volume.dim(1), volume.dim(2), volume.dim(3)};
  const Extents3& p = swc.patch;
  std::array<std::vector<std::size_t>, 3> starts;
  for (int a = 0; a < 3; ++a) {
    if (n[a] < p[a]) throw Error(ErrorKind::ShapeMismatch, "dense oracle needs volume >= patch");
    const auto stride = std::max<std::size_t>(1, static_cast<std::size_t>(static_cast<double>(p[a]) * (1.0 - swc.overlap)));
    for (std::size_t x = 0; x <= n[a] - p[a]; ++x)
      if (x % stride == 0 || x == n[a] - p[a]) starts[a].push_back(x);
  }
  struct Window {
    Extents3 o;
    std::vector<double> logits;
  };
  std::vector<Window> windows;
  const auto v = volume.values();
  for (auto x : starts[0])
    for (auto y : starts[1])
      for (auto z : starts[2]) {
        std::vector<double> patch;
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t i = 0; i < p[0]; ++i)
            for (std::size_t j = 0; j < p[1]; ++j)
              for (std::size_t k = 0; k < p[2]; ++k)
                patch.push_back(v[((c * n[0] + x + i) * n[1] + y + j) * n[2] + z + k]);
        const Tensor out = model.forward(Tensor::from({C, p[0], p[1], p[2]}, std::move(patch)));
        windows.push_back({{x, y, z}, {out.values().begin(), out.values().end()}});
      }
  auto weight = [&](std::size_t i, std::size_t j, std::size_t k) {
    const std::size_t idx[3] = {i, j, k};
    double w = 1.0;
    for (int a = 0; a < 3; ++a) {
      const double s = swc.sigma_scale * static_cast<double>(p[a]);
      const double off = static_cast<double>(idx[a]) - (static_cast<double>(p[a]) - 1.0) / 2.0;
      w *= std::exp(-off * off / (2.0 * s * s));
    }
    return std::max(w, std::numeric_limits<double>::min());
  };
  const std::size_t nv = n[0] * n[1] * n[2], pv = p[0] * p[1] * p[2];
  std::vector<double> out(K * nv, 0.0);
  for (std::size_t x = 0; x < n[0]; ++x)
    for (std::size_t y = 0; y < n[1]; ++y)
      for (std::size_t z = 0; z < n[2]; ++z) {
        std::vector<double> num(K, 0.0);
        double den = 0.0;
        for (const auto& win : windows) {
          if (x < win.o[0] || y < win.o[1] || z < win.o[2] || x >= win.o[0] + p[0] || y >= win.o[1] + p[1] ||
              z >= win.o[2] + p[2])
            continue;
          const std::size_t i = x - win.o[0], j = y - win.o[1], k = z - win.o[2];
          const std::size_t q = (i * p[1] + j) * p[2] + k;
          double mx = -std::numeric_limits<double>::infinity();
          for (std::size_t c = 0; c < K; ++c) mx = std::max(mx, win.logits[c * pv + q]);
          double s = 0.0;
          for (std::size_t c = 0; c < K; ++c) s += std::exp(win.logits[c * pv + q] - mx);
          const double w = weight(i, j, k);
          for (std::size_t c = 0; c < K; ++c) num[c] += w * std::exp(win.logits[c * pv + q] - mx) / s;
          den += w;
        }
        const std::size_t at = (x * n[1] + y) * n[2] + z;
        for (std::size_t c = 0; c < K; ++c) out[c * nv + at] = num[c] / den;
      }
  return out;
}

}  // namespace gasa::verify
