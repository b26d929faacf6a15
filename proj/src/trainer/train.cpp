#include <chrono>
#include <cmath>
#include <cstdio>

#include "gasa/error.hpp"
#include "gasa/loss_metrics.hpp"
#include "gasa/ops.hpp"
#include "gasa/trainer.hpp"

namespace gasa {
namespace {

constexpr std::uint64_t kModelStream = 0;
constexpr std::uint64_t kTrainStream = 1;

struct Sample {
  Tensor image;   // [C, p, p, p]
  Tensor onehot;  // [K, p, p, p]
};

// Copies the [C, patch] block at `origin` out of a [C, W, H, D] buffer.
std::vector<double> crop(const std::vector<double>& src, std::size_t channels, const Extents3& dims,
                         const Extents3& origin, const Extents3& patch) {
  std::vector<double> out(channels * patch[0] * patch[1] * patch[2]);
  std::size_t o = 0;
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t i = 0; i < patch[0]; ++i)
      for (std::size_t j = 0; j < patch[1]; ++j) {
        const std::size_t base = ((c * dims[0] + origin[0] + i) * dims[1] + origin[1] + j) * dims[2] + origin[2];
        for (std::size_t k = 0; k < patch[2]; ++k) out[o++] = src[base + k];
      }
  return out;
}

class Sampler {
 public:
  Sampler(std::span<const Case> cases, const TrainConfig& cfg, std::size_t num_classes)
      : cases_(cases), cfg_(cfg), num_classes_(num_classes) {
    for (const auto& c : cases) {
      const Extents3 d = c.image.spatial();
      if (c.labels.spatial() != d)
        throw Error(ErrorKind::ShapeMismatch, "image and label extents differ");
      for (int a = 0; a < 3; ++a)
        if (cfg.patch[a] > d[a])
          throw Error(ErrorKind::InvalidConfig, "patch " + shape_str({cfg.patch[0], cfg.patch[1], cfg.patch[2]}) +
                                                    " exceeds case extent " + shape_str({d[0], d[1], d[2]}));
      std::vector<std::size_t> fg;
      for (std::size_t j = 0; j < c.labels.voxels(); ++j)
        if (c.labels.data[j] > 0.0) fg.push_back(j);
      foreground_.push_back(std::move(fg));
    }
  }

  Sample draw(Rng& rng) const {
    const std::size_t ci = rng.below(cases_.size());
    const Case& c = cases_[ci];
    const Extents3 d = c.image.spatial();
    const Extents3& p = cfg_.patch;
    Extents3 origin{};
    const auto& fg = foreground_[ci];
    if (!fg.empty() && rng.bernoulli(cfg_.foreground_fraction)) {
      const std::size_t v = fg[rng.below(fg.size())];
      const Extents3 at{v / (d[1] * d[2]), (v / d[2]) % d[1], v % d[2]};
      for (int a = 0; a < 3; ++a) {
        const auto lo = static_cast<std::ptrdiff_t>(at[a]) - static_cast<std::ptrdiff_t>(p[a] / 2);
        origin[a] = static_cast<std::size_t>(
            std::clamp<std::ptrdiff_t>(lo, 0, static_cast<std::ptrdiff_t>(d[a] - p[a])));
      }
    } else {
      for (int a = 0; a < 3; ++a) origin[a] = rng.below(d[a] - p[a] + 1);
    }
    const std::size_t ch = c.image.channels();
    auto img = crop(c.image.data, ch, d, origin, p);
    auto lab = crop(c.labels.data, 1, d, origin, p);
    return {Tensor::from({ch, p[0], p[1], p[2]}, std::move(img)), one_hot(lab, num_classes_, p)};
  }

 private:
  std::span<const Case> cases_;
  const TrainConfig& cfg_;
  std::size_t num_classes_;
  std::vector<std::vector<std::size_t>> foreground_;
};

void clip_gradients(const ParamList& params, double max_norm) {
  if (max_norm <= 0.0) return;
  double ss = 0.0;
  for (const auto& p : params)
    for (double g : p.tensor.grad()) ss += g * g;
  const double norm = std::sqrt(ss);
  if (!(norm > max_norm)) return;
  const double s = max_norm / norm;
  for (const auto& p : params) {
    Tensor t = p.tensor;
    if (!t.has_grad()) continue;
    for (double& g : t.mutable_grad()) g *= s;
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr0 > 0.0) || !std::isfinite(lr0)) throw Error(ErrorKind::InvalidConfig, "lr0 must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw Error(ErrorKind::InvalidConfig, "momentum must lie in [0, 1)");
  if (epochs < 1) throw Error(ErrorKind::InvalidConfig, "epochs must be >= 1");
  if (iters_per_epoch < 1) throw Error(ErrorKind::InvalidConfig, "iters_per_epoch must be >= 1");
  if (batch < 1) throw Error(ErrorKind::InvalidConfig, "batch must be >= 1");
  for (auto p : patch)
    if (p == 0) throw Error(ErrorKind::InvalidConfig, "patch extents must be positive");
  if (!(poly_exponent > 0.0)) throw Error(ErrorKind::InvalidConfig, "poly_exponent must be positive");
  if (!(grad_clip >= 0.0)) throw Error(ErrorKind::InvalidConfig, "grad_clip must be >= 0");
  if (!(foreground_fraction >= 0.0 && foreground_fraction <= 1.0))
    throw Error(ErrorKind::InvalidConfig, "foreground_fraction must lie in [0, 1]");
}

PreprocessPlan make_plan(std::span<const Case> raw_cases) {
  std::vector<const Volume*> imgs, masks;
  std::vector<Spacing> spacings;
  for (const auto& c : raw_cases) {
    imgs.push_back(&c.image);
    masks.push_back(&c.labels);
    spacings.push_back(c.image.spacing);
  }
  PreprocessPlan plan;
  plan.stats = compute_foreground_stats(imgs, masks);
  plan.target = target_spacing(spacings);
  return plan;
}

Volume preprocess_image(const Volume& image, const PreprocessPlan& plan) {
  // The mask only matters when stats are absent; the plan always supplies them.
  const Volume none = Volume::labels(image.spatial(), std::vector<double>(image.voxels(), 0.0), image.spacing);
  return resample_image(clip_normalize(image, none, plan.stats), plan.target);
}

Case preprocess_case(const Case& raw, const PreprocessPlan& plan, std::size_t num_classes) {
  Case out;
  out.image = resample_image(clip_normalize(raw.image, raw.labels, plan.stats), plan.target);
  out.labels = resample_labels_to(raw.labels, out.image.spatial(), plan.target, num_classes);
  return out;
}

std::string EpochLog::to_json_line() const {
  char buf[160];
  std::snprintf(buf, sizeof buf, "{\"epoch\":%zu,\"lr\":%.17g,\"loss\":%.17g,\"seconds\":%.6f}", epoch, lr, loss,
                seconds);
  return buf;
}

TrainState init_train_state(const BackboneConfig& model_cfg, const TrainConfig& cfg) {
  cfg.validate();
  BackboneConfig mc = model_cfg;
  mc.patch = cfg.patch;
  const Rng root(cfg.seed);
  Rng model_rng = root.fork(kModelStream);
  TrainState s{build_model(mc, model_rng), {}, 0, root.fork(kTrainStream).state(), {}};
  for (const auto& p : s.model.parameters()) s.velocity.emplace_back(p.tensor.numel(), 0.0);
  return s;
}

void train(TrainState& state, std::span<const Case> cases, const TrainConfig& cfg, const TrainOptions& opt) {
  cfg.validate();
  if (cases.empty()) throw Error(ErrorKind::InvalidConfig, "training set is empty");
  const std::size_t stop = std::min(cfg.epochs, opt.stop_after_epoch.value_or(cfg.epochs));
  const Sampler sampler(cases, cfg, state.model.cfg.num_classes);
  const ParamList params = state.model.parameters();
  if (state.velocity.size() != params.size())
    throw Error(ErrorKind::ShapeMismatch, "momentum buffers do not match the model");
  Rng rng(state.rng);
  const ForwardOptions fwd{true, opt.bypass_gasa};
  const double inv_batch = 1.0 / static_cast<double>(cfg.batch);

  for (std::size_t epoch = state.epoch; epoch < stop; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = poly_lr(epoch, cfg.epochs, cfg.lr0, cfg.poly_exponent);
    double loss_sum = 0.0;
    for (std::size_t it = 0; it < cfg.iters_per_epoch; ++it) {
      for (const auto& p : params) Tensor(p.tensor).zero_grad();
      Tensor total;
      for (std::size_t b = 0; b < cfg.batch; ++b) {
        const Sample s = sampler.draw(rng);
        const Tensor logits = unet_forward(s.image, state.model, fwd, rng);
        const Tensor l = soft_dice_ce_loss(logits, s.onehot);
        total = total.defined() ? ops::add(total, l) : l;
      }
      total = ops::scale(total, inv_batch);
      backward(total);
      loss_sum += total.item();
      clip_gradients(params, cfg.grad_clip);
      sgd_nesterov_step(params, state.velocity, lr, cfg.momentum);
      Tape::current().clear();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const EpochLog entry{epoch, lr, loss_sum / static_cast<double>(cfg.iters_per_epoch), secs};
    state.log.push_back(entry);
    state.epoch = epoch + 1;
    state.rng = rng.state();
    if (opt.on_epoch) opt.on_epoch(entry);
  }
  for (const auto& p : params) Tensor(p.tensor).zero_grad();
}

}  // namespace gasa
