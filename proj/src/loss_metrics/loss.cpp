#include <algorithm>
#include <cmath>
#include <memory>

#include "gasa/error.hpp"
#include "gasa/loss_metrics.hpp"

namespace gasa {
namespace {

struct Forward {
  std::vector<double> prob;  // softmax over classes, [K, N]
  std::vector<double> inter, denom;
  double dice = 0.0;
  double ce = 0.0;
};

void check_shapes(const Tensor& logits, const Tensor& onehot) {
  if (logits.rank() < 2 || logits.shape() != onehot.shape())
    throw Error(ErrorKind::ShapeMismatch, "loss expects matching [K, ...] logits and one-hot labels, got " +
                                              shape_str(logits.shape()) + " and " +
                                              shape_str(onehot.shape()));
}

Forward forward(std::span<const double> z, std::span<const double> l, std::size_t k, std::size_t n) {
  Forward f;
  f.prob.resize(k * n);
  for (std::size_t j = 0; j < n; ++j) {
    double mx = z[j];
    for (std::size_t c = 1; c < k; ++c) mx = std::max(mx, z[c * n + j]);
    double s = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      const double e = std::exp(z[c * n + j] - mx);
      f.prob[c * n + j] = e;
      s += e;
    }
    for (std::size_t c = 0; c < k; ++c) f.prob[c * n + j] /= s;
  }
  f.inter.assign(k, 0.0);
  f.denom.assign(k, 0.0);
  double ratio_sum = 0.0;
  double ce = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    const double* y = f.prob.data() + c * n;
    const double* lc = l.data() + c * n;
    double inter = 0.0, ll = 0.0, yy = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      inter += lc[j] * y[j];
      ll += lc[j] * lc[j];
      yy += y[j] * y[j];
      if (lc[j] != 0.0) ce += lc[j] * std::log(std::max(y[j], kLogClamp));
    }
    f.inter[c] = inter;
    f.denom[c] = ll + yy;
    ratio_sum += f.denom[c] > 0.0 ? 2.0 * inter / f.denom[c] : 1.0;
  }
  f.dice = 1.0 - ratio_sum / static_cast<double>(k);
  f.ce = -ce / static_cast<double>(n);
  return f;
}

}  // namespace

LossTerms soft_dice_ce_terms(const Tensor& logits, const Tensor& onehot) {
  check_shapes(logits, onehot);
  const std::size_t k = logits.dim(0);
  const auto f = forward(logits.values(), onehot.values(), k, logits.numel() / k);
  return {f.dice, f.ce};
}

Tensor soft_dice_ce_loss(const Tensor& logits, const Tensor& onehot) {
  check_shapes(logits, onehot);
  const std::size_t k = logits.dim(0);
  const std::size_t n = logits.numel() / k;
  auto f = std::make_shared<Forward>(forward(logits.values(), onehot.values(), k, n));
  const double total = f->dice + f->ce;
  return make_result({1}, {total}, {logits, onehot},
                     [logits, onehot, f, k, n](std::span<const double> g, std::span<const double>) {
                       double* gz = grad_sink(logits);
                       if (!gz) return;
                       auto l = onehot.values();
                       const double inv_k = 1.0 / static_cast<double>(k);
                       const double inv_n = 1.0 / static_cast<double>(n);
                       // dL/dY, then through the per-voxel softmax.
                       std::vector<double> gy(k * n);
                       for (std::size_t c = 0; c < k; ++c) {
                         const double u = f->denom[c];
                         const double i = f->inter[c];
                         for (std::size_t j = 0; j < n; ++j) {
                           const double y = f->prob[c * n + j];
                           const double lv = l[c * n + j];
                           double d = 0.0;
                           if (u > 0.0) d = -inv_k * (2.0 * lv / u - 4.0 * i * y / (u * u));
                           if (lv != 0.0 && y > kLogClamp) d -= inv_n * lv / y;
                           gy[c * n + j] = g[0] * d;
                         }
                       }
                       for (std::size_t j = 0; j < n; ++j) {
                         double s = 0.0;
                         for (std::size_t c = 0; c < k; ++c) s += f->prob[c * n + j] * gy[c * n + j];
                         for (std::size_t c = 0; c < k; ++c)
                           gz[c * n + j] += f->prob[c * n + j] * (gy[c * n + j] - s);
                       }
                     });
}

Tensor one_hot(std::span<const double> labels, std::size_t num_classes, const Extents3& dims) {
  const std::size_t n = dims[0] * dims[1] * dims[2];
  if (labels.size() != n)
    throw Error(ErrorKind::ShapeMismatch, "one_hot: label count does not match extents");
  std::vector<double> v(num_classes * n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    const auto c = static_cast<std::size_t>(labels[j]);
    if (labels[j] < 0.0 || c >= num_classes)
      throw Error(ErrorKind::ShapeMismatch, "one_hot: label out of range");
    v[c * n + j] = 1.0;
  }
  return Tensor::from({num_classes, dims[0], dims[1], dims[2]}, std::move(v));
}

Volume argmax_labels(std::span<const double> scores, std::size_t num_classes, const Extents3& dims,
                     const Spacing& spacing) {
  const std::size_t n = dims[0] * dims[1] * dims[2];
  if (scores.size() != num_classes * n)
    throw Error(ErrorKind::ShapeMismatch, "argmax_labels: score count does not match extents");
  std::vector<double> lab(n);
  for (std::size_t j = 0; j < n; ++j) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < num_classes; ++c)
      if (scores[c * n + j] > scores[best * n + j]) best = c;
    lab[j] = static_cast<double>(best);
  }
  return Volume::labels(dims, std::move(lab), spacing);
}

}  // namespace gasa
