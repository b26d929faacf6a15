#include <algorithm>
#include <cmath>
#include <limits>

#include "gasa/error.hpp"
#include "gasa/trainer.hpp"

namespace gasa {
namespace {

struct Grid {
  std::size_t c = 0;
  Extents3 d{};
  std::size_t voxels() const { return d[0] * d[1] * d[2]; }
  std::size_t at(std::size_t ch, std::size_t i, std::size_t j, std::size_t k) const {
    return ((ch * d[0] + i) * d[1] + j) * d[2] + k;
  }
};

Grid grid_of(const Tensor& t) { return {t.dim(0), {t.dim(1), t.dim(2), t.dim(3)}}; }

}  // namespace

void SlidingWindowConfig::validate() const {
  for (auto p : patch)
    if (p == 0) throw Error(ErrorKind::InvalidConfig, "window patch extents must be positive");
  if (!(overlap >= 0.0 && overlap < 1.0)) throw Error(ErrorKind::InvalidConfig, "overlap must lie in [0, 1)");
  if (!(sigma_scale > 0.0) || !std::isfinite(sigma_scale))
    throw Error(ErrorKind::InvalidConfig, "sigma_scale must be positive");
}

PatchModel make_patch_model(const ModelParams& model, bool bypass_gasa) {
  PatchModel m;
  m.in_channels = model.cfg.in_channels;
  m.num_classes = model.cfg.num_classes;
  m.forward = [model, bypass_gasa](const Tensor& x) {
    Rng unused(0);
    return unet_forward(x, model, ForwardOptions{false, bypass_gasa}, unused);
  };
  return m;
}

std::vector<double> gaussian_importance(const Extents3& patch, double sigma_scale) {
  std::array<std::vector<double>, 3> axis;
  for (int a = 0; a < 3; ++a) {
    const double n = static_cast<double>(patch[a]);
    const double sigma = sigma_scale * n;
    const double c = (n - 1.0) / 2.0;
    for (std::size_t i = 0; i < patch[a]; ++i) {
      const double x = static_cast<double>(i) - c;
      axis[a].push_back(std::exp(-x * x / (2.0 * sigma * sigma)));
    }
  }
  std::vector<double> w;
  w.reserve(patch[0] * patch[1] * patch[2]);
  for (double x : axis[0])
    for (double y : axis[1])
      for (double z : axis[2]) w.push_back(std::max(x * y * z, std::numeric_limits<double>::min()));
  return w;
}

std::vector<std::size_t> window_starts(std::size_t n, std::size_t patch, double overlap) {
  if (patch > n || patch == 0) throw Error(ErrorKind::ShapeMismatch, "window larger than the volume");
  const auto stride = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(static_cast<double>(patch) * (1.0 - overlap))));
  std::vector<std::size_t> s;
  for (std::size_t x = 0; x + patch < n; x += stride) s.push_back(x);
  s.push_back(n - patch);
  return s;
}

Tensor flip_spatial(const Tensor& t, unsigned axes_mask) {
  if (t.rank() != 4) throw Error(ErrorKind::ShapeMismatch, "flip_spatial expects [C, W, H, D]");
  const Grid g = grid_of(t);
  const auto v = t.values();
  std::vector<double> out(v.size());
  for (std::size_t c = 0; c < g.c; ++c)
    for (std::size_t i = 0; i < g.d[0]; ++i)
      for (std::size_t j = 0; j < g.d[1]; ++j)
        for (std::size_t k = 0; k < g.d[2]; ++k) {
          const std::size_t si = axes_mask & 1u ? g.d[0] - 1 - i : i;
          const std::size_t sj = axes_mask & 2u ? g.d[1] - 1 - j : j;
          const std::size_t sk = axes_mask & 4u ? g.d[2] - 1 - k : k;
          out[g.at(c, i, j, k)] = v[g.at(c, si, sj, sk)];
        }
  return Tensor::from(t.shape(), std::move(out));
}

Tensor sliding_window_predict(const PatchModel& model, const Tensor& volume, const SlidingWindowConfig& swc,
                              const std::vector<std::size_t>* tile_order) {
  swc.validate();
  if (volume.rank() != 4 || volume.dim(0) != model.in_channels)
    throw Error(ErrorKind::ShapeMismatch, "volume " + shape_str(volume.shape()) + " needs " +
                                              std::to_string(model.in_channels) + " channels");
  NoGradGuard no_grad;
  const Grid in = grid_of(volume);
  const Extents3& p = swc.patch;
  const std::size_t K = model.num_classes;

  // Zero-pad (centred) any axis shorter than the patch.
  Grid padded{in.c, {}};
  Extents3 lo{};
  for (int a = 0; a < 3; ++a) {
    padded.d[a] = std::max(in.d[a], p[a]);
    lo[a] = (padded.d[a] - in.d[a]) / 2;
  }
  std::vector<double> src(padded.c * padded.voxels(), 0.0);
  const auto vin = volume.values();
  for (std::size_t c = 0; c < in.c; ++c)
    for (std::size_t i = 0; i < in.d[0]; ++i)
      for (std::size_t j = 0; j < in.d[1]; ++j)
        for (std::size_t k = 0; k < in.d[2]; ++k)
          src[padded.at(c, i + lo[0], j + lo[1], k + lo[2])] = vin[in.at(c, i, j, k)];

  std::vector<Extents3> tiles;
  const auto sx = window_starts(padded.d[0], p[0], swc.overlap);
  const auto sy = window_starts(padded.d[1], p[1], swc.overlap);
  const auto sz = window_starts(padded.d[2], p[2], swc.overlap);
  for (auto x : sx)
    for (auto y : sy)
      for (auto z : sz) tiles.push_back({x, y, z});
  std::vector<std::size_t> order(tiles.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (tile_order) {
    order = *tile_order;
    auto sorted = order;
    std::sort(sorted.begin(), sorted.end());
    bool ok = sorted.size() == tiles.size();
    for (std::size_t i = 0; ok && i < sorted.size(); ++i) ok = sorted[i] == i;
    if (!ok) throw Error(ErrorKind::ShapeMismatch, "tile_order is not a permutation of the windows");
  }

  const auto w = gaussian_importance(p, swc.sigma_scale);
  const std::size_t pv = p[0] * p[1] * p[2];
  const Grid acc_grid{K, padded.d};
  std::vector<double> acc(K * padded.voxels(), 0.0), wsum(padded.voxels(), 0.0);
  std::vector<double> patch(in.c * pv), prob(K);
  for (std::size_t t : order) {
    const Extents3& o = tiles[t];
    std::size_t n = 0;
    for (std::size_t c = 0; c < in.c; ++c)
      for (std::size_t i = 0; i < p[0]; ++i)
        for (std::size_t j = 0; j < p[1]; ++j)
          for (std::size_t k = 0; k < p[2]; ++k) patch[n++] = src[padded.at(c, o[0] + i, o[1] + j, o[2] + k)];
    const Tensor logits = model.forward(Tensor::from({in.c, p[0], p[1], p[2]}, patch));
    if (logits.shape() != Shape{K, p[0], p[1], p[2]})
      throw Error(ErrorKind::ShapeMismatch, "patch model returned " + shape_str(logits.shape()));
    const auto z = logits.values();
    std::size_t q = 0;
    for (std::size_t i = 0; i < p[0]; ++i)
      for (std::size_t j = 0; j < p[1]; ++j)
        for (std::size_t k = 0; k < p[2]; ++k, ++q) {
          double mx = z[q];
          for (std::size_t c = 1; c < K; ++c) mx = std::max(mx, z[c * pv + q]);
          double s = 0.0;
          for (std::size_t c = 0; c < K; ++c) s += prob[c] = std::exp(z[c * pv + q] - mx);
          const std::size_t dst = acc_grid.at(0, o[0] + i, o[1] + j, o[2] + k);
          for (std::size_t c = 0; c < K; ++c) acc[c * padded.voxels() + dst] += w[q] * (prob[c] / s);
          wsum[dst] += w[q];
        }
  }

  std::vector<double> out(K * in.voxels());
  for (std::size_t c = 0; c < K; ++c)
    for (std::size_t i = 0; i < in.d[0]; ++i)
      for (std::size_t j = 0; j < in.d[1]; ++j)
        for (std::size_t k = 0; k < in.d[2]; ++k) {
          const std::size_t src_idx = acc_grid.at(0, i + lo[0], j + lo[1], k + lo[2]);
          out[Grid{K, in.d}.at(c, i, j, k)] = acc[c * padded.voxels() + src_idx] / wsum[src_idx];
        }
  return Tensor::from({K, in.d[0], in.d[1], in.d[2]}, std::move(out));
}

Tensor tta_mirror_predict(const PatchModel& model, const Tensor& volume, const SlidingWindowConfig& swc) {
  std::vector<double> sum;
  Shape shape;
  for (unsigned mask = 0; mask < 8; ++mask) {
    const Tensor prob = flip_spatial(sliding_window_predict(model, flip_spatial(volume, mask), swc), mask);
    if (sum.empty()) {
      shape = prob.shape();
      sum.assign(prob.numel(), 0.0);
    }
    const auto v = prob.values();
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += v[i];
  }
  for (double& x : sum) x /= 8.0;
  return Tensor::from(shape, std::move(sum));
}

Tensor predict_probabilities(const PatchModel& model, const Tensor& volume, const SlidingWindowConfig& swc) {
  return swc.tta_mirror ? tta_mirror_predict(model, volume, swc) : sliding_window_predict(model, volume, swc);
}

}  // namespace gasa
