#pragma once

// Volume container, the .gvol file format, intensity normalisation and
// resampling.
//
// File layout: `<name>.gvol` holds the 8-byte magic "GASAVOL1" followed by the
// raw little-endian payload (row-major, channel slowest); `<name>.gvol.json`
// holds {dtype, shape, spacing, origin, kind}.

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "gasa/tensor.hpp"

namespace gasa {

using Spacing = std::array<double, 3>;

enum class VolumeKind { Image, Labels };
enum class DType { F32, F64, U16 };

std::string_view to_string(VolumeKind k);
std::string_view to_string(DType t);

struct Volume {
  VolumeKind kind = VolumeKind::Image;
  DType dtype = DType::F64;
  Shape shape;  // [W,H,D] or [C,W,H,D]
  std::vector<double> data;
  Spacing spacing{1.0, 1.0, 1.0};
  Spacing origin{0.0, 0.0, 0.0};

  static Volume image(Extents3 dims, std::vector<double> data, Spacing spacing = {1.0, 1.0, 1.0});
  static Volume labels(Extents3 dims, std::vector<double> data, Spacing spacing = {1.0, 1.0, 1.0});

  std::size_t channels() const { return shape.size() == 4 ? shape[0] : 1; }
  Extents3 spatial() const;
  std::size_t voxels() const;
  int label_at(std::size_t i) const { return static_cast<int>(data[i]); }
  /// Throws ShapeMismatch / InvalidSpacing / FormatError on broken invariants.
  void validate() const;

  friend bool operator==(const Volume&, const Volume&) = default;
};

// ---- I/O ----
/// `path` names the payload file (conventionally `*.gvol`); the JSON sidecar is
/// `path + ".json"`. Throws IoError.
void write_volume(const Volume& v, const std::filesystem::path& path);
/// Throws IoError (unreadable) or FormatError (bad magic, header, length).
Volume read_volume(const std::filesystem::path& path);

// ---- normalisation ----
struct ForegroundStats {
  double lower = 0.0;  // 0.5th percentile
  double upper = 0.0;  // 99.5th percentile
  double mean = 0.0;
  double stddev = 1.0;
};

/// q in [0, 100]; linear interpolation between order statistics (sorted copy).
double percentile(std::vector<double> values, double q);

/// Percentiles, mean and population std over all foreground voxels (mask > 0)
/// of every image. Throws EmptyForeground with fewer than 2 foreground voxels.
ForegroundStats compute_foreground_stats(std::span<const Volume* const> images,
                                         std::span<const Volume* const> masks);

/// Clamp to [lower, upper] then (x - mean) / std; a zero std is treated as 1.
/// Stats default to those of this image under `fg_mask`.
Volume clip_normalize(const Volume& img, const Volume& fg_mask,
                      const std::optional<ForegroundStats>& stats = std::nullopt);

// ---- resampling ----
/// Per-axis median; if the median's max/min spacing ratio exceeds 3 the
/// coarsest axis takes the 10th percentile of that axis's spacings.
Spacing target_spacing(std::span<const Spacing> spacings);

/// Axis that gets nearest-neighbour treatment, if any: the coarsest axis when
/// both the spacing ratio (max/min) and the voxel-count ratio (largest extent
/// over the coarse axis extent) exceed 3.
std::optional<std::size_t> anisotropic_axis(const Spacing& spacing, const Extents3& dims);

Extents3 resampled_extents(const Extents3& dims, const Spacing& from, const Spacing& to);

/// Separable cubic (Catmull-Rom) interpolation; nearest neighbour on the
/// anisotropic axis. Throws InvalidSpacing.
Volume resample_image(const Volume& img, const Spacing& new_spacing);
Volume resample_image_to(const Volume& img, const Extents3& out_dims, const Spacing& new_spacing);

/// One-hot -> separable linear (nearest on the anisotropic axis) -> argmax,
/// lowest class index winning ties. Throws InvalidSpacing.
Volume resample_labels(const Volume& lab, const Spacing& new_spacing, std::size_t num_classes);
Volume resample_labels_to(const Volume& lab, const Extents3& out_dims, const Spacing& new_spacing,
                          std::size_t num_classes);

}  // namespace gasa
