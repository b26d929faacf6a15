#pragma once

// Optimisation schedule, training loop, sliding-window inference and
// checkpoints.

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gasa/backbone.hpp"
#include "gasa/params.hpp"
#include "gasa/rng.hpp"
#include "gasa/volume.hpp"

namespace gasa {

// ---- schedule and optimiser ----

/// lr0 * (1 - epoch/epoch_max)^exponent. Throws InvalidEpoch unless
/// 0 <= epoch <= epoch_max and epoch_max >= 1.
double poly_lr(std::size_t epoch, std::size_t epoch_max, double lr0, double exponent = 0.9);

/// Nesterov SGD on flat buffers: v <- mu v + g; p <- p - lr (g + mu v).
/// Throws ShapeMismatch on length mismatch.
void sgd_nesterov_step(std::span<double> param, std::span<const double> grad, std::span<double> velocity,
                       double lr, double mu);

/// Applies the step to every parameter; a parameter without a gradient is
/// stepped with a zero gradient. Throws ShapeMismatch.
void sgd_nesterov_step(const ParamList& params, std::vector<std::vector<double>>& velocity, double lr,
                       double mu);

// ---- training ----

struct TrainConfig {
  double lr0 = 0.01;
  double momentum = 0.99;
  std::size_t epochs = 50;
  std::size_t iters_per_epoch = 20;
  std::size_t batch = 2;
  Extents3 patch{16, 16, 16};
  std::uint64_t seed = 0;
  double poly_exponent = 0.9;
  /// Global gradient-norm clip; 0 disables.
  double grad_clip = 12.0;
  /// Fraction of samples whose patch is centred on a foreground voxel.
  double foreground_fraction = 1.0 / 3.0;

  /// Throws InvalidConfig.
  void validate() const;
};

/// Preprocessed training/evaluation case: image [C,W,H,D] normalised and
/// resampled, labels at the same grid.
struct Case {
  Volume image;
  Volume labels;
};

/// Dataset-level preprocessing plan derived from the training cases.
struct PreprocessPlan {
  ForegroundStats stats;
  Spacing target{1.0, 1.0, 1.0};
};

/// Foreground statistics (mask = labels > 0) and target spacing of `cases`.
PreprocessPlan make_plan(std::span<const Case> raw_cases);
/// clip_normalize with the plan's stats, then resample image and labels to the
/// plan's target spacing.
Case preprocess_case(const Case& raw, const PreprocessPlan& plan, std::size_t num_classes);
/// Image only; used at inference time.
Volume preprocess_image(const Volume& image, const PreprocessPlan& plan);

struct EpochLog {
  std::size_t epoch = 0;  // 0-based
  double lr = 0.0;
  double loss = 0.0;      // mean over the epoch's iterations
  double seconds = 0.0;

  /// JSON-lines record.
  std::string to_json_line() const;
};

struct TrainState {
  ModelParams model;
  std::vector<std::vector<double>> velocity;  // per parameter, in parameters() order
  std::size_t epoch = 0;                      // epochs completed
  RngState rng;                               // sampling / dropout stream
  std::vector<EpochLog> log;
};

/// Fresh model and optimiser state; deterministic in (backbone cfg, seed).
TrainState init_train_state(const BackboneConfig& model_cfg, const TrainConfig& cfg);

struct TrainOptions {
  /// Stop once this many epochs are complete (resumable later).
  std::optional<std::size_t> stop_after_epoch;
  bool bypass_gasa = false;
  std::function<void(const EpochLog&)> on_epoch;
};

/// Runs epochs [state.epoch, stop) over `cases`. Throws InvalidConfig on an
/// empty dataset or a patch larger than a case.
void train(TrainState& state, std::span<const Case> cases, const TrainConfig& cfg,
           const TrainOptions& opt = {});

// ---- inference ----

struct SlidingWindowConfig {
  Extents3 patch{16, 16, 16};
  double overlap = 0.5;
  double sigma_scale = 0.125;
  bool tta_mirror = false;

  /// Throws InvalidConfig.
  void validate() const;
};

/// Maps an input patch [C, pw, ph, pd] to logits [K, pw, ph, pd].
struct PatchModel {
  std::size_t in_channels = 1;
  std::size_t num_classes = 2;
  std::function<Tensor(const Tensor&)> forward;
};

PatchModel make_patch_model(const ModelParams& model, bool bypass_gasa = false);

/// Separable Gaussian over the patch, sigma = sigma_scale * extent per axis,
/// centred at (extent - 1) / 2 and equal to 1 there. Row-major [pw, ph, pd].
std::vector<double> gaussian_importance(const Extents3& patch, double sigma_scale);

/// Window origins along one axis: stride = max(1, floor(patch * (1 - overlap))),
/// last window clamped to end at n. Requires patch <= n.
std::vector<std::size_t> window_starts(std::size_t n, std::size_t patch, double overlap);

/// Probabilities [K, W, H, D]. The volume is zero-padded where smaller than the
/// patch. `tile_order` optionally permutes the window visitation order.
/// Throws ShapeMismatch.
Tensor sliding_window_predict(const PatchModel& model, const Tensor& volume, const SlidingWindowConfig& swc,
                              const std::vector<std::size_t>* tile_order = nullptr);

/// Mean of the 8 mirrored sliding-window predictions, each flipped back.
Tensor tta_mirror_predict(const PatchModel& model, const Tensor& volume, const SlidingWindowConfig& swc);

/// Flip over the chosen spatial axes of a [C, W, H, D] tensor (bit 0 = W).
Tensor flip_spatial(const Tensor& t, unsigned axes_mask);

/// sliding_window_predict or tta_mirror_predict depending on swc.tta_mirror.
Tensor predict_probabilities(const PatchModel& model, const Tensor& volume, const SlidingWindowConfig& swc);

// ---- checkpoints ----

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  BackboneConfig model_cfg;
  TrainConfig train_cfg;
  std::optional<PreprocessPlan> plan;
  std::vector<std::string> names;
  std::vector<Shape> shapes;
  std::vector<std::vector<double>> values;
  std::vector<std::vector<double>> velocity;
  std::size_t epoch = 0;
  RngState rng;
  std::vector<EpochLog> log;

  friend bool operator==(const Checkpoint& a, const Checkpoint& b);
};

Checkpoint make_checkpoint(const TrainState& state, const TrainConfig& cfg,
                           const std::optional<PreprocessPlan>& plan = std::nullopt);
/// Rebuilds the model and optimiser state. Throws FormatError on a parameter
/// name/shape mismatch.
TrainState restore_train_state(const Checkpoint& ckpt);

/// Throws IoError.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
/// Throws IoError, VersionMismatch (magic or version) or FormatError.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace gasa
