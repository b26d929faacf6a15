#pragma once

// JSON forms of every configuration struct and the merged run configuration.
// Parsing rejects unknown keys and validates before returning.

#include <string>

#include <json.hpp>

#include "gasa/backbone.hpp"
#include "gasa/loss_metrics.hpp"
#include "gasa/synth.hpp"
#include "gasa/trainer.hpp"

namespace gasa {

using ojson = nlohmann::ordered_json;

struct MetricsConfig {
  /// tau = nsd_tolerance_voxels * min(spacing).
  double nsd_tolerance_voxels = 1.0;
  std::string hec = "kits";
};

struct DataConfig {
  PhantomSpec phantom;
  std::size_t train_cases = 16;
  std::size_t test_cases = 4;
};

struct AblateConfig {
  std::vector<std::pair<std::size_t, std::size_t>> grid{{2, 10}, {5, 25}, {10, 50}, {20, 100}};
  std::vector<PeMode> pe_modes{PeMode::None, PeMode::BeforeMHSA, PeMode::AfterMHSA};
  std::vector<bool> layer_norm{false};
  std::size_t epochs = 4;
  std::size_t iters_per_epoch = 10;
};

struct RunConfig {
  DataConfig data;
  BackboneConfig model;
  TrainConfig train;
  SlidingWindowConfig window;
  MetricsConfig metrics;
  AblateConfig ablate;

  /// Cross-field checks plus every member's validate(). Throws InvalidConfig.
  void validate() const;
};

ojson to_json(const GasaConfig& c);
ojson to_json(const BackboneConfig& c);
ojson to_json(const TrainConfig& c);
ojson to_json(const SlidingWindowConfig& c);
ojson to_json(const PreprocessPlan& p);
ojson to_json(const RunConfig& c);

/// Each overlays the keys present in `j` onto `base`. Throws InvalidConfig.
GasaConfig gasa_config_from_json(const nlohmann::json& j, GasaConfig base = {});
BackboneConfig backbone_config_from_json(const nlohmann::json& j, BackboneConfig base = {});
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});
SlidingWindowConfig window_config_from_json(const nlohmann::json& j, SlidingWindowConfig base = {});
PreprocessPlan plan_from_json(const nlohmann::json& j);
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {});

/// Throws IoError / InvalidConfig.
RunConfig load_run_config(const std::string& path);

}  // namespace gasa
