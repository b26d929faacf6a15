#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gasa/tensor.hpp"
#include "gasa/volume.hpp"

namespace gasa {

// ---- training loss ----

inline constexpr double kLogClamp = 1e-12;

/// Soft Dice + cross entropy with unit weights:
///   1 - (1/Nc) sum_c 2 sum_j L Y / (sum_j L^2 + sum_j Y^2)
///     - (1/Ny) sum_c sum_j L log Y
/// where Y = softmax over the class axis (axis 0) of `logits`. A class whose
/// denominator is zero contributes a dice ratio of 1. log is clamped at 1e-12.
/// Throws ShapeMismatch.
Tensor soft_dice_ce_loss(const Tensor& logits, const Tensor& onehot);

struct LossTerms {
  double dice = 0.0;  // 1 - mean dice ratio
  double ce = 0.0;
  double total() const { return dice + ce; }
};

/// Same quantities as soft_dice_ce_loss without recording a gradient.
LossTerms soft_dice_ce_terms(const Tensor& logits, const Tensor& onehot);

/// labels (ids in [0, num_classes)) over `dims` -> [num_classes, W, H, D].
Tensor one_hot(std::span<const double> labels, std::size_t num_classes, const Extents3& dims);

/// Per-voxel argmax over axis 0 of [K, W, H, D] probabilities or logits,
/// lowest index winning ties.
Volume argmax_labels(std::span<const double> scores, std::size_t num_classes, const Extents3& dims,
                     const Spacing& spacing);

// ---- evaluation metrics ----

using ClassSet = std::vector<int>;

/// 2|P & G| / (|P| + |G|) of the masks {label in class_set}; nullopt when
/// both masks are empty. Throws ShapeMismatch.
std::optional<double> dice_score(const Volume& pred, const Volume& gt, const ClassSet& class_set);

/// Symmetric normalised surface dice. Surfaces are the mask voxels with at
/// least one 6-neighbour outside the mask (the volume border counts as
/// outside); distances are Euclidean between voxel centres scaled by
/// `spacing`. nullopt when both masks are empty. Throws ShapeMismatch or
/// InvalidSpacing (non-positive spacing, negative tau).
std::optional<double> nsd(const Volume& pred, const Volume& gt, const ClassSet& class_set, double tau,
                          const Spacing& spacing);

/// Surface voxels (linear indices) of a binary mask, 6-connectivity.
std::vector<std::size_t> surface_voxels(const std::vector<bool>& mask, const Extents3& dims);

struct HecGroup {
  std::string name;
  ClassSet ids;
};

struct HecSpec {
  std::vector<HecGroup> groups;
  /// Throws InvalidConfig on empty groups or ids outside [0, num_classes).
  void validate(std::size_t num_classes) const;
};

/// Named presets: "kits" = {organ & masses: {1,2}, tumor: {2}}; "classes" =
/// one group per foreground class. Throws InvalidConfig.
HecSpec hec_preset(const std::string& name, std::size_t num_classes);

struct MetricEntry {
  std::string name;
  std::optional<double> dice;
  std::optional<double> nsd;
};

struct MetricReport {
  std::vector<MetricEntry> classes;
  std::vector<MetricEntry> groups;
  /// Means over defined entries of `classes`.
  std::optional<double> mean_dice;
  std::optional<double> mean_nsd;
};

MetricReport hec_evaluate(const Volume& pred, const Volume& gt, const HecSpec& spec, double tau,
                          const Spacing& spacing);

/// Per foreground class (1..K-1) plus the HEC groups.
MetricReport evaluate_case(const Volume& pred, const Volume& gt, std::size_t num_classes,
                           const HecSpec& spec, double tau, const Spacing& spacing);

/// Averages entries by name over cases (undefined values skipped).
MetricReport average_reports(const std::vector<MetricReport>& reports);

nlohmann::json to_json(const MetricReport& r);

/// Fixed-width table, Dice and NSD scaled by 100.
std::string format_report_table(const MetricReport& r);

}  // namespace gasa
