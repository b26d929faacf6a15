#include <algorithm>
#include <cmath>

#include "gasa/error.hpp"
#include "gasa/volume.hpp"

namespace gasa {

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw Error(ErrorKind::EmptyForeground, "percentile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double t = pos - static_cast<double>(lo);
  return values[lo] + t * (values[hi] - values[lo]);
}

ForegroundStats compute_foreground_stats(std::span<const Volume* const> images,
                                         std::span<const Volume* const> masks) {
  if (images.size() != masks.size())
    throw Error(ErrorKind::ShapeMismatch, "one mask per image is required");
  std::vector<double> fg;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Volume& img = *images[i];
    const Volume& mask = *masks[i];
    if (img.spatial() != mask.spatial() || mask.channels() != 1)
      throw Error(ErrorKind::ShapeMismatch, "mask geometry does not match image");
    const std::size_t v = img.voxels();
    for (std::size_t c = 0; c < img.channels(); ++c)
      for (std::size_t j = 0; j < v; ++j)
        if (mask.data[j] > 0.0) fg.push_back(img.data[c * v + j]);
  }
  if (fg.size() < 2)
    throw Error(ErrorKind::EmptyForeground, "need at least 2 foreground voxels, found " +
                                                std::to_string(fg.size()));
  ForegroundStats s;
  double sum = 0.0;
  for (double x : fg) sum += x;
  s.mean = sum / static_cast<double>(fg.size());
  double ss = 0.0;
  for (double x : fg) ss += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(ss / static_cast<double>(fg.size()));
  s.lower = percentile(fg, 0.5);
  s.upper = percentile(std::move(fg), 99.5);
  return s;
}

Volume clip_normalize(const Volume& img, const Volume& fg_mask, const std::optional<ForegroundStats>& stats) {
  if (img.kind != VolumeKind::Image)
    throw Error(ErrorKind::FormatError, "clip_normalize expects an image volume");
  const Volume* imgs[] = {&img};
  const Volume* masks[] = {&fg_mask};
  const ForegroundStats s = stats ? *stats : compute_foreground_stats(imgs, masks);
  const double sd = s.stddev > 0.0 ? s.stddev : 1.0;
  Volume out = img;
  out.dtype = DType::F64;
  for (auto& x : out.data) x = (std::clamp(x, s.lower, s.upper) - s.mean) / sd;
  return out;
}

Spacing target_spacing(std::span<const Spacing> spacings) {
  if (spacings.empty()) throw Error(ErrorKind::InvalidSpacing, "target_spacing of no cases");
  Spacing median{};
  std::array<std::vector<double>, 3> per_axis;
  for (const auto& s : spacings)
    for (int a = 0; a < 3; ++a) {
      if (!(s[a] > 0.0)) throw Error(ErrorKind::InvalidSpacing, "spacings must be positive");
      per_axis[a].push_back(s[a]);
    }
  for (int a = 0; a < 3; ++a) median[a] = percentile(per_axis[a], 50.0);
  const auto [mn, mx] = std::minmax_element(median.begin(), median.end());
  if (*mx / *mn > 3.0) {
    const auto coarse = static_cast<std::size_t>(mx - median.begin());
    median[coarse] = percentile(per_axis[coarse], 10.0);
  }
  return median;
}

}  // namespace gasa
