#include <algorithm>
#include <cmath>

#include "gasa/error.hpp"
#include "gasa/volume.hpp"

namespace gasa {
namespace {

enum class Kernel { Cubic, Linear, Nearest };

struct Taps {
  // Four source indices and weights per output sample; weights[1] is implied
  // by the partition of unity (see apply_axis).
  std::vector<std::array<std::size_t, 4>> idx;
  std::vector<std::array<double, 4>> w;
};

std::size_t clamp_index(std::ptrdiff_t i, std::size_t n) {
  return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(n) - 1));
}

Taps make_taps(std::size_t n_in, std::size_t n_out, Kernel kernel) {
  Taps taps;
  taps.idx.resize(n_out);
  taps.w.resize(n_out);
  const double ratio = static_cast<double>(n_in) / static_cast<double>(n_out);
  for (std::size_t o = 0; o < n_out; ++o) {
    const double x = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    const auto i = static_cast<std::ptrdiff_t>(std::floor(x));
    const double t = x - static_cast<double>(i);
    auto& id = taps.idx[o];
    auto& w = taps.w[o];
    switch (kernel) {
      case Kernel::Cubic: {
        id = {clamp_index(i - 1, n_in), clamp_index(i, n_in), clamp_index(i + 1, n_in),
              clamp_index(i + 2, n_in)};
        const double t2 = t * t, t3 = t2 * t;
        w = {0.5 * (-t3 + 2.0 * t2 - t), 0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
             0.5 * (-3.0 * t3 + 4.0 * t2 + t), 0.5 * (t3 - t2)};
        break;
      }
      case Kernel::Linear: {
        const std::size_t a = clamp_index(i, n_in);
        id = {a, a, clamp_index(i + 1, n_in), a};
        w = {0.0, 1.0 - t, t, 0.0};
        break;
      }
      case Kernel::Nearest: {
        const std::size_t a = clamp_index(static_cast<std::ptrdiff_t>(std::floor(x + 0.5)), n_in);
        id = {a, a, a, a};
        w = {0.0, 1.0, 0.0, 0.0};
        break;
      }
    }
  }
  return taps;
}

// Resamples one axis of a [outer, n, inner] block. Samples are combined as
// base + sum_k w_k (v_k - base), which reproduces constants exactly.
std::vector<double> apply_axis(const std::vector<double>& src, std::size_t outer, std::size_t n_in,
                               std::size_t inner, std::size_t n_out, Kernel kernel) {
  const Taps taps = make_taps(n_in, n_out, kernel);
  std::vector<double> dst(outer * n_out * inner);
  for (std::size_t a = 0; a < outer; ++a) {
    const double* s = src.data() + a * n_in * inner;
    double* d = dst.data() + a * n_out * inner;
    for (std::size_t o = 0; o < n_out; ++o) {
      const auto& id = taps.idx[o];
      const auto& w = taps.w[o];
      const double* v0 = s + id[0] * inner;
      const double* v1 = s + id[1] * inner;
      const double* v2 = s + id[2] * inner;
      const double* v3 = s + id[3] * inner;
      double* out = d + o * inner;
      if (kernel == Kernel::Nearest) {
        std::copy_n(v1, inner, out);
        continue;
      }
      for (std::size_t b = 0; b < inner; ++b) {
        const double base = v1[b];
        out[b] = base + w[0] * (v0[b] - base) + w[2] * (v2[b] - base) + w[3] * (v3[b] - base);
      }
    }
  }
  return dst;
}

// Resamples every channel of a [C, W, H, D] buffer to out_dims.
std::vector<double> resample_channels(const std::vector<double>& data, std::size_t channels,
                                      const Extents3& in, const Extents3& out, Kernel in_plane,
                                      std::optional<std::size_t> nearest_axis) {
  std::vector<double> cur = data;
  Extents3 dims = in;
  for (std::size_t axis = 0; axis < 3; ++axis) {
    if (dims[axis] == out[axis]) continue;
    std::size_t outer = channels, inner = 1;
    for (std::size_t a = 0; a < axis; ++a) outer *= dims[a];
    for (std::size_t a = axis + 1; a < 3; ++a) inner *= dims[a];
    const Kernel k = nearest_axis && *nearest_axis == axis ? Kernel::Nearest : in_plane;
    cur = apply_axis(cur, outer, dims[axis], inner, out[axis], k);
    dims[axis] = out[axis];
  }
  return cur;
}

void check_spacing(const Spacing& s) {
  for (double x : s)
    if (!(x > 0.0) || !std::isfinite(x))
      throw Error(ErrorKind::InvalidSpacing, "target spacing must be positive and finite");
}

void check_dims(const Extents3& d) {
  for (auto e : d)
    if (e == 0) throw Error(ErrorKind::ShapeMismatch, "resampled extent is zero");
}

}  // namespace

std::optional<std::size_t> anisotropic_axis(const Spacing& spacing, const Extents3& dims) {
  const auto mx = std::max_element(spacing.begin(), spacing.end());
  const double mn = *std::min_element(spacing.begin(), spacing.end());
  const auto coarse = static_cast<std::size_t>(mx - spacing.begin());
  const double voxel_ratio = static_cast<double>(*std::max_element(dims.begin(), dims.end())) /
                             static_cast<double>(dims[coarse]);
  if (*mx / mn > 3.0 && voxel_ratio > 3.0) return coarse;
  return std::nullopt;
}

Extents3 resampled_extents(const Extents3& dims, const Spacing& from, const Spacing& to) {
  Extents3 out{};
  for (int a = 0; a < 3; ++a)
    out[a] = static_cast<std::size_t>(
        std::max(1.0, std::round(static_cast<double>(dims[a]) * from[a] / to[a])));
  return out;
}

Volume resample_image(const Volume& img, const Spacing& new_spacing) {
  check_spacing(new_spacing);
  return resample_image_to(img, resampled_extents(img.spatial(), img.spacing, new_spacing), new_spacing);
}

Volume resample_image_to(const Volume& img, const Extents3& out_dims, const Spacing& new_spacing) {
  check_spacing(new_spacing);
  check_dims(out_dims);
  img.validate();
  if (img.kind != VolumeKind::Image) throw Error(ErrorKind::FormatError, "resample_image expects an image");
  if (out_dims == img.spatial() && new_spacing == img.spacing) return img;
  Volume out = img;
  out.data = resample_channels(img.data, img.channels(), img.spatial(), out_dims, Kernel::Cubic,
                               anisotropic_axis(img.spacing, img.spatial()));
  if (img.shape.size() == 4)
    out.shape = {img.channels(), out_dims[0], out_dims[1], out_dims[2]};
  else
    out.shape = {out_dims[0], out_dims[1], out_dims[2]};
  out.spacing = new_spacing;
  if (out.dtype == DType::U16) out.dtype = DType::F64;
  return out;
}

Volume resample_labels(const Volume& lab, const Spacing& new_spacing, std::size_t num_classes) {
  check_spacing(new_spacing);
  return resample_labels_to(lab, resampled_extents(lab.spatial(), lab.spacing, new_spacing), new_spacing,
                            num_classes);
}

Volume resample_labels_to(const Volume& lab, const Extents3& out_dims, const Spacing& new_spacing,
                          std::size_t num_classes) {
  check_spacing(new_spacing);
  check_dims(out_dims);
  lab.validate();
  if (lab.kind != VolumeKind::Labels || lab.channels() != 1)
    throw Error(ErrorKind::FormatError, "resample_labels expects a single-channel label volume");
  if (out_dims == lab.spatial() && new_spacing == lab.spacing) return lab;
  const std::size_t n_in = lab.voxels();
  for (double v : lab.data)
    if (v >= static_cast<double>(num_classes))
      throw Error(ErrorKind::FormatError, "label " + std::to_string(static_cast<long>(v)) +
                                              " exceeds num_classes " + std::to_string(num_classes));
  const auto aniso = anisotropic_axis(lab.spacing, lab.spatial());
  std::vector<double> onehot(num_classes * n_in, 0.0);
  for (std::size_t j = 0; j < n_in; ++j) onehot[static_cast<std::size_t>(lab.data[j]) * n_in + j] = 1.0;
  const auto prob = resample_channels(onehot, num_classes, lab.spatial(), out_dims, Kernel::Linear, aniso);
  const std::size_t n_out = out_dims[0] * out_dims[1] * out_dims[2];
  Volume out = lab;
  out.shape = {out_dims[0], out_dims[1], out_dims[2]};
  out.spacing = new_spacing;
  out.data.assign(n_out, 0.0);
  for (std::size_t j = 0; j < n_out; ++j) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < num_classes; ++c)
      if (prob[c * n_out + j] > prob[best * n_out + j]) best = c;
    out.data[j] = static_cast<double>(best);
  }
  return out;
}

}  // namespace gasa
