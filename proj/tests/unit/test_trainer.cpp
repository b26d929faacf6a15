#include <cmath>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "gasa/error.hpp"
#include "gasa/synth.hpp"
#include "gasa/trainer.hpp"

namespace gasa {
namespace {

namespace fs = std::filesystem;

TEST(Schedule, PolyLr) {
  EXPECT_DOUBLE_EQ(poly_lr(0, 1000, 0.01), 0.01);
  EXPECT_EQ(poly_lr(1000, 1000, 0.01), 0.0);
  EXPECT_NEAR(poly_lr(500, 1000, 0.01), 0.0053589, 1e-7);
  EXPECT_THROW(poly_lr(1001, 1000, 0.01), Error);
  EXPECT_THROW(poly_lr(0, 0, 0.01), Error);
}

TEST(Schedule, NesterovRecurrence) {
  std::vector<double> p{1.0}, v{0.0};
  const std::vector<double> g{0.5};
  sgd_nesterov_step(p, g, v, 0.1, 0.9);
  EXPECT_DOUBLE_EQ(v[0], 0.5);
  EXPECT_DOUBLE_EQ(p[0], 1.0 - 0.1 * (0.5 + 0.9 * 0.5));
  sgd_nesterov_step(p, g, v, 0.1, 0.9);
  EXPECT_DOUBLE_EQ(v[0], 0.9 * 0.5 + 0.5);
  EXPECT_DOUBLE_EQ(p[0], 1.0 - 0.1 * (0.5 + 0.45) - 0.1 * (0.5 + 0.9 * 0.95));
  std::vector<double> q{2.0}, w{0.0};
  sgd_nesterov_step(q, g, w, 0.2, 0.0);
  EXPECT_DOUBLE_EQ(q[0], 2.0 - 0.2 * 0.5);
  sgd_nesterov_step(q, g, w, 0.0, 0.9);
  EXPECT_DOUBLE_EQ(q[0], 1.9);
  EXPECT_DOUBLE_EQ(w[0], 0.9 * 0.5 + 0.5);
}

PatchModel constant_stub(std::size_t K) {
  return {1, K, [K](const Tensor& x) {
            std::vector<double> out(K * x.numel());
            for (std::size_t c = 0; c < K; ++c)
              std::fill(out.begin() + c * x.numel(), out.begin() + (c + 1) * x.numel(), 0.3 * c);
            return Tensor::from({K, x.dim(1), x.dim(2), x.dim(3)}, std::move(out));
          }};
}

TEST(SlidingWindow, GaussianCentreAndCorner) {
  const auto w = gaussian_importance({8, 8, 8}, 0.125);
  double mx = 0.0;
  for (double v : w) mx = std::max(mx, v);
  EXPECT_LE(mx, 1.0);
  // corner offset 3.5 per axis, sigma 1: exp(-3 * 3.5^2 / 2)
  EXPECT_NEAR(w[0], std::exp(-3.0 * 3.5 * 3.5 / 2.0), 1e-15);
  EXPECT_EQ(window_starts(20, 8, 0.5), (std::vector<std::size_t>{0, 4, 8, 12}));
  EXPECT_EQ(window_starts(8, 8, 0.5), (std::vector<std::size_t>{0}));
}

TEST(SlidingWindow, SingleWindowEqualsSoftmax) {
  const PatchModel m = constant_stub(3);
  SlidingWindowConfig swc;
  swc.patch = {4, 4, 4};
  const Tensor probs = sliding_window_predict(m, Tensor::zeros({1, 4, 4, 4}), swc);
  const double z = 1.0 + std::exp(0.3) + std::exp(0.6);
  EXPECT_NEAR(probs.values()[0], 1.0 / z, 1e-15);
  EXPECT_NEAR(probs.values()[2 * 64], std::exp(0.6) / z, 1e-15);
}

TEST(SlidingWindow, SmallVolumeIsPadded) {
  SlidingWindowConfig swc;
  swc.patch = {4, 4, 4};
  const Tensor probs = sliding_window_predict(constant_stub(2), Tensor::zeros({1, 3, 2, 5}), swc);
  EXPECT_EQ(probs.shape(), (Shape{2, 3, 2, 5}));
}

TEST(SlidingWindow, FlipIsAnInvolution) {
  std::vector<double> v(2 * 24);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i);
  const Tensor t = Tensor::from({2, 2, 3, 4}, v);
  for (unsigned m = 0; m < 8; ++m) {
    const Tensor back = flip_spatial(flip_spatial(t, m), m);
    EXPECT_TRUE(std::equal(back.values().begin(), back.values().end(), v.begin()));
  }
  EXPECT_EQ(flip_spatial(t, 1).values()[0], 12.0);
}

fs::path tiny_dataset_dir() {
  const fs::path d = fs::temp_directory_path() / "gasa_unit_trainer_ckpt";
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

TrainState tiny_state(TrainConfig& cfg) {
  BackboneConfig m;
  m.stage_channels = {2, 4};
  m.downsample_strides = {2};
  m.gasa.d_model = 4;
  m.gasa.heads = 2;
  cfg.patch = {8, 8, 8};
  cfg.epochs = 3;
  cfg.iters_per_epoch = 2;
  cfg.seed = 3;
  return init_train_state(m, cfg);
}

TEST(Checkpoint, RoundTripAndCorruption) {
  TrainConfig cfg;
  TrainState st = tiny_state(cfg);
  PhantomSpec ps;
  ps.size = {12, 12, 12};
  const Phantom ph = generate_phantom(ps, 0);
  std::vector<Case> raw{{ph.image, ph.labels}};
  const PreprocessPlan plan = make_plan(raw);
  std::vector<Case> cases{preprocess_case(raw[0], plan, 3)};
  TrainOptions opt;
  opt.stop_after_epoch = 1;
  train(st, cases, cfg, opt);
  const Checkpoint ck = make_checkpoint(st, cfg, plan);
  const fs::path dir = tiny_dataset_dir();
  save_checkpoint(ck, dir / "a.ckpt");
  const Checkpoint back = load_checkpoint(dir / "a.ckpt");
  EXPECT_TRUE(back == ck);
  save_checkpoint(back, dir / "b.ckpt");
  std::ifstream fa(dir / "a.ckpt", std::ios::binary), fb(dir / "b.ckpt", std::ios::binary);
  EXPECT_TRUE(std::equal(std::istreambuf_iterator<char>(fa), {}, std::istreambuf_iterator<char>(fb), {}));

  {
    std::fstream f(dir / "b.ckpt", std::ios::in | std::ios::out | std::ios::binary);
    f.put('Z');
  }
  try {
    load_checkpoint(dir / "b.ckpt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::VersionMismatch);
  }
  save_checkpoint(ck, dir / "c.ckpt");
  fs::resize_file(dir / "c.ckpt", fs::file_size(dir / "c.ckpt") / 2);
  try {
    load_checkpoint(dir / "c.ckpt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::FormatError);
  }
}

TEST(Checkpoint, RestoredStateContinuesIdentically) {
  TrainConfig cfg;
  TrainState a = tiny_state(cfg);
  PhantomSpec ps;
  ps.size = {10, 10, 10};
  const Phantom ph = generate_phantom(ps, 2);
  std::vector<Case> raw{{ph.image, ph.labels}};
  const PreprocessPlan plan = make_plan(raw);
  std::vector<Case> cases{preprocess_case(raw[0], plan, 3)};
  TrainState full = tiny_state(cfg);
  train(full, cases, cfg);
  TrainOptions stop;
  stop.stop_after_epoch = 1;
  train(a, cases, cfg, stop);
  TrainState b = restore_train_state(make_checkpoint(a, cfg));
  train(b, cases, cfg);
  ASSERT_EQ(b.log.size(), full.log.size());
  for (std::size_t i = 0; i < full.log.size(); ++i) EXPECT_EQ(b.log[i].loss, full.log[i].loss);
}

}  // namespace
}  // namespace gasa
