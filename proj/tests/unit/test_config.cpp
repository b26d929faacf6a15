#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "gasa/config.hpp"
#include "gasa/error.hpp"

namespace gasa {
namespace {

TEST(Config, DefaultsValidateAndRoundTrip) {
  RunConfig c;
  EXPECT_NO_THROW(c.validate());
  const auto j = nlohmann::json::parse(to_json(c).dump());
  EXPECT_EQ(to_json(run_config_from_json(j)).dump(), to_json(c).dump());
}

TEST(Config, UnknownKeysRejected) {
  auto expect_invalid = [](const nlohmann::json& j) {
    try {
      run_config_from_json(j);
      FAIL() << j.dump();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::InvalidConfig);
    }
  };
  expect_invalid({{"bogus", 1}});
  expect_invalid({{"train", {{"learning_rate", 0.1}}}});
  expect_invalid({{"model", {{"gasa", {{"head", 2}}}}}});
}

TEST(Config, OverlayKeepsUnspecifiedFields) {
  const RunConfig c = run_config_from_json({{"train", {{"epochs", 7}}}});
  EXPECT_EQ(c.train.epochs, 7u);
  EXPECT_EQ(c.train.iters_per_epoch, TrainConfig{}.iters_per_epoch);
}

TEST(Config, CrossFieldChecks) {
  RunConfig c;
  c.model.num_classes = 4;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.window.patch = {8, 8, 8};
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.model.gasa.heads = 4;  // 25 not divisible by 4
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.metrics.hec = "btcv";
  EXPECT_THROW(c.validate(), Error);
}

TEST(Config, LoadFromFile) {
  const auto p = std::filesystem::temp_directory_path() / "gasa_unit_cfg.json";
  std::ofstream(p) << R"({"train": {"seed": 9}, "model": {"gasa": {"pe_mode": "before"}}})";
  const RunConfig c = load_run_config(p.string());
  EXPECT_EQ(c.train.seed, 9u);
  EXPECT_EQ(c.model.gasa.pe_mode, PeMode::BeforeMHSA);
  std::ofstream(p) << "{not json";
  EXPECT_THROW(load_run_config(p.string()), Error);
}

}  // namespace
}  // namespace gasa
