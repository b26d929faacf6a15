#pragma once

// Deterministic ellipsoid phantoms. Class 1 is an "organ"; when num_classes
// >= 3, class 2 is a "tumor" nested inside it; classes >= 3 are further
// disjoint organs. Image intensity is the class mean plus Gaussian noise.

#include <filesystem>
#include <vector>

#include <json.hpp>

#include "gasa/rng.hpp"
#include "gasa/volume.hpp"

namespace gasa {

struct PhantomSpec {
  Extents3 size{32, 32, 32};
  std::size_t num_classes = 3;
  /// Mean intensity per class; empty selects the built-in table.
  std::vector<double> class_means;
  double noise_sigma = 10.0;
  std::uint64_t seed = 0;
  Spacing spacing{1.0, 1.0, 1.0};

  /// Throws InvalidSpec.
  void validate() const;
  double mean_for(std::size_t cls) const;
};

struct Phantom {
  Volume image;
  Volume labels;
};

/// Throws InvalidSpec when the class regions cannot be placed.
Phantom generate_phantom(const PhantomSpec& spec, std::size_t case_index);

struct CaseFiles {
  std::filesystem::path image;
  std::filesystem::path labels;
};

struct DatasetManifest {
  PhantomSpec spec;
  std::vector<CaseFiles> cases;  // relative to `root`
  std::vector<std::size_t> train, test;
  std::filesystem::path root;

  std::filesystem::path image_path(std::size_t i) const { return root / cases.at(i).image; }
  std::filesystem::path labels_path(std::size_t i) const { return root / cases.at(i).labels; }
};

inline constexpr const char* kManifestName = "manifest.json";

/// Writes n_cases image/label pairs and manifest.json into out_dir; the last
/// n_test cases form the test split. Throws IoError / InvalidSpec.
DatasetManifest make_dataset(const PhantomSpec& spec, std::size_t n_cases, std::size_t n_test,
                             const std::filesystem::path& out_dir);

/// Throws IoError / FormatError.
DatasetManifest read_manifest(const std::filesystem::path& manifest_path);

nlohmann::ordered_json to_json(const PhantomSpec& spec);
/// Unknown keys are rejected (InvalidConfig).
PhantomSpec phantom_spec_from_json(const nlohmann::json& j);

}  // namespace gasa
