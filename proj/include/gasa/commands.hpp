#pragma once

// Pipeline entry points behind the `gasa` subcommands. Every command writes
// only below its output directory.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "gasa/config.hpp"
#include "gasa/verify.hpp"

namespace gasa {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitRuntime = 2, kExitVerifyFailed = 3 };

inline constexpr const char* kCheckpointFile = "model.ckpt";
inline constexpr const char* kTrainLogFile = "train_log.jsonl";
inline constexpr const char* kResolvedConfigFile = "config.json";
inline constexpr const char* kReportJsonFile = "report.json";
inline constexpr const char* kReportTableFile = "report.txt";

/// Reads the listed cases of a manifest. Throws IoError / FormatError.
std::vector<Case> load_cases(const DatasetManifest& m, const std::vector<std::size_t>& indices);

struct TrainOutcome {
  TrainState state;
  PreprocessPlan plan;
};

/// Preprocesses the manifest's training split and trains (optionally
/// continuing from `resume`).
TrainOutcome train_from_manifest(const RunConfig& cfg, const DatasetManifest& m, const TrainOptions& opt = {},
                                 const std::optional<Checkpoint>& resume = std::nullopt);

/// Softmax-averaged prediction of one or more models on a raw image, argmax,
/// mapped back to the raw grid.
Volume predict_labels(const std::vector<PatchModel>& models, const PreprocessPlan& plan, const Volume& raw_image,
                      const SlidingWindowConfig& swc, std::size_t num_classes);

/// Per-case reports averaged over `indices`.
MetricReport evaluate_models(const std::vector<PatchModel>& models, const PreprocessPlan& plan,
                             const DatasetManifest& m, const std::vector<std::size_t>& indices,
                             const RunConfig& cfg);

DatasetManifest cmd_synth(const RunConfig& cfg, const std::filesystem::path& out, std::ostream& log);

/// Resumes from out/model.ckpt when `resume` is set and the file exists.
Checkpoint cmd_train(const RunConfig& cfg, const std::filesystem::path& data_dir, const std::filesystem::path& out,
                     std::ostream& log, bool resume = false);

MetricReport cmd_eval(const RunConfig& cfg, const std::filesystem::path& data_dir,
                      const std::vector<std::filesystem::path>& checkpoints, const std::filesystem::path& out,
                      std::ostream& log);

/// Returns the sweep report; finished cells (out/cells/*.json) are reused.
ojson cmd_ablate(const RunConfig& cfg, const std::filesystem::path& data_dir, const std::filesystem::path& out,
                 std::ostream& log);

/// Runs the verification suite, prints a summary and writes
/// out/verify.json when `out` is given. Returns the exit code.
int cmd_verify(const verify::VerifyOptions& opt, const std::optional<std::filesystem::path>& out, std::ostream& log);

}  // namespace gasa
