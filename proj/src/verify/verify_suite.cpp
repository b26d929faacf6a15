#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "gasa/backbone.hpp"
#include "gasa/error.hpp"
#include "gasa/ops.hpp"
#include "gasa/verify.hpp"

namespace gasa::verify {
namespace {

std::string fmt(const char* f, double a, double b = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

template <class F>
CheckResult timed(const std::string& name, F&& body) {
  const auto t0 = std::chrono::steady_clock::now();
  CheckResult r{name, false, "", 0.0};
  try {
    body(r);
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("exception: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0, bool requires_grad = false) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = scale * rng.normal();
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

Extents3 random_dims(Rng& rng, std::size_t lo, std::size_t hi) {
  Extents3 d{};
  for (auto& x : d) x = lo + rng.below(hi - lo + 1);
  return d;
}

// Labels with every id of [0, k) present when the volume is large enough.
std::vector<double> random_labels(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<double> lab(n);
  for (std::size_t j = 0; j < n; ++j) lab[j] = static_cast<double>(j < k ? j : rng.below(k));
  return lab;
}

}  // namespace

CheckResult check_model_gradients(const VerifyOptions& opt, double* max_rel_error) {
  return timed("model_gradients", [&](CheckResult& r) {
    BackboneConfig cfg;
    cfg.in_channels = 1;
    cfg.num_classes = 2;
    cfg.stage_channels = {2, 4};
    cfg.downsample_strides = {2};
    cfg.patch = {8, 8, 8};
    cfg.gasa.d_model = 4;
    cfg.gasa.heads = 2;
    Rng rng(opt.seed);
    const ModelParams model = build_model(cfg, rng);
    // Nonzero positional embedding so its path is exercised off the origin.
    for (double& v : Tensor(model.gasa->pe).mutable_values()) v = 0.1 * rng.normal();
    const Tensor x = random_tensor({1, 8, 8, 8}, rng);
    const Tensor onehot = one_hot(random_labels(512, 2, rng), 2, {8, 8, 8});
    auto loss = [&] {
      Rng unused(0);
      return soft_dice_ce_loss(unet_forward(x, model, ForwardOptions{false, false}, unused), onehot);
    };
    const auto g = gradcheck(model.parameters(), loss, 1e-4, 0, opt.perturb_gradient ? 1e-2 : 0.0);
    if (max_rel_error) *max_rel_error = g.max_rel_error;
    r.passed = g.max_rel_error <= 1e-3;
    r.detail = fmt("max rel err %.3e over %.0f elements", g.max_rel_error, static_cast<double>(g.checked)) +
               " (worst " + g.worst_param + ", " + std::to_string(g.kink_refined) + " kink-refined)";
  });
}

CheckResult check_op_gradients(const VerifyOptions& opt) {
  return timed("op_gradients", [&](CheckResult& r) {
    Rng rng(opt.seed + 1);
    struct Case {
      const char* name;
      double tol;
      ParamList params;
      std::function<Tensor()> loss;
    };
    std::vector<Case> cases;
    auto weighted_sum = [](const Tensor& out, const Tensor& w) { return ops::sum(ops::mul(out, w)); };
    {
      Tensor a = random_tensor({3, 4}, rng, 1.0, true), b = random_tensor({4, 5}, rng, 1.0, true);
      Tensor w = random_tensor({3, 5}, rng);
      cases.push_back({"matmul", 1e-6, {{"a", a}, {"b", b}}, [=] { return weighted_sum(ops::matmul(a, b), w); }});
    }
    {
      Tensor x = random_tensor({2, 5, 4, 6}, rng, 1.0, true), k = random_tensor({3, 2, 3, 3, 3}, rng, 0.5, true);
      Tensor b = random_tensor({3}, rng, 1.0, true);
      ops::Conv3dOptions o{{2, 2, 2}, {1, 1, 1}};
      Tensor w = random_tensor(ops::conv3d(x, k, b, o).shape(), rng);
      cases.push_back({"conv3d", 1e-5, {{"x", x}, {"k", k}, {"b", b}},
                       [=] { return weighted_sum(ops::conv3d(x, k, b, o), w); }});
    }
    {
      Tensor x = random_tensor({4, 6}, rng, 1.0, true);
      Tensor w = random_tensor({4, 6}, rng);
      cases.push_back({"softmax", 1e-6, {{"x", x}}, [=] { return weighted_sum(ops::softmax_lastdim(x), w); }});
    }
    {
      Tensor x = random_tensor({3, 4, 3, 5}, rng, 1.0, true);
      Tensor g = random_tensor({3}, rng, 1.0, true), b = random_tensor({3}, rng, 1.0, true);
      Tensor w = random_tensor({3, 4, 3, 5}, rng);
      cases.push_back({"instance_norm", 1e-5, {{"x", x}, {"g", g}, {"b", b}},
                       [=] { return weighted_sum(ops::instance_norm(x, g, b), w); }});
    }
    {
      Tensor x = random_tensor({5, 6}, rng, 1.0, true);
      Tensor g = random_tensor({6}, rng, 1.0, true), b = random_tensor({6}, rng, 1.0, true);
      Tensor w = random_tensor({5, 6}, rng);
      cases.push_back({"layer_norm", 1e-5, {{"x", x}, {"g", g}, {"b", b}},
                       [=] { return weighted_sum(ops::layer_norm(x, g, b), w); }});
    }
    {
      Tensor z = random_tensor({2, 3, 3, 3}, rng, 1.0, true);
      Tensor l = one_hot(random_labels(27, 2, rng), 2, {3, 3, 3});
      cases.push_back({"dice_ce_loss", 1e-4, {{"z", z}}, [=] { return soft_dice_ce_loss(z, l); }});
    }
    {
      GasaConfig g;
      g.d_model = 4;
      g.heads = 2;
      g.use_layer_norm = true;
      g.pe_mode = PeMode::BeforeMHSA;
      g.in_channels = 2;
      g.spatial = {3, 4, 2};
      const GasaParams p = init_gasa_params(g, rng);
      for (double& v : Tensor(p.pe).mutable_values()) v = 0.1 * rng.normal();
      Tensor x = random_tensor({2, 3, 4, 2}, rng, 1.0, true);
      Tensor w = random_tensor({2 + 3 * 4, 3, 4, 2}, rng);
      ParamList params = p.parameters();
      params.push_back({"x", x});
      cases.push_back({"gasa_block", 1e-3, params, [=] {
                         Rng unused(0);
                         return weighted_sum(gasa_forward(x, p, g, false, unused), w);
                       }});
    }
    r.passed = true;
    std::ostringstream os;
    for (auto& c : cases) {
      const auto g = gradcheck(c.params, c.loss, 1e-5, 0, opt.perturb_gradient ? 1e-2 : 0.0);
      const bool ok = g.max_rel_error <= c.tol;
      r.passed = r.passed && ok;
      os << c.name << '=' << fmt("%.1e", g.max_rel_error) << (ok ? " " : "(FAIL) ");
    }
    r.detail = os.str();
  });
}

CheckResult check_gasa_invariants(const VerifyOptions& opt, std::size_t shapes) {
  return timed("gasa_invariants", [&](CheckResult& r) {
    Rng rng(opt.seed + 2);
    double worst_row = 0.0;
    std::size_t failures = 0;
    std::string first_failure;
    for (std::size_t s = 0; s < shapes; ++s) {
      GasaConfig g;
      g.heads = 1 + rng.below(3);
      g.d_model = g.heads * (1 + rng.below(3));
      g.pe_mode = static_cast<PeMode>(rng.below(3));
      g.use_layer_norm = rng.bernoulli(0.5);
      g.in_channels = 1 + rng.below(4);
      g.spatial = random_dims(rng, 1, 6);
      const GasaParams p = init_gasa_params(g, rng);
      for (double& v : Tensor(p.pe).mutable_values()) v = rng.normal();
      const std::size_t C = g.in_channels, dm = g.d_model;
      const auto [W, H, D] = g.spatial;
      const Tensor x = random_tensor({C, W, H, D}, rng);
      GasaTrace trace;
      const Tensor y = gasa_forward(x, p, g, rng.bernoulli(0.5), rng, &trace);
      auto fail = [&](const std::string& what) {
        if (failures++ == 0) first_failure = "shape " + shape_str({C, W, H, D}) + ": " + what;
      };
      if (trace.patches.tokens.dim(0) != W + H + D) fail("token count");
      if (y.shape() != Shape{C + 3 * dm, W, H, D}) {
        fail("output channels");
        continue;
      }
      const auto xv = x.values(), yv = y.values();
      if (!std::equal(xv.begin(), xv.end(), yv.begin())) fail("pass-through channels differ");
      const std::size_t plane = W * H * D;
      bool constant = true;
      for (std::size_t c = 0; c < dm; ++c)
        for (std::size_t i = 0; i < W; ++i)
          for (std::size_t j = 0; j < H; ++j)
            for (std::size_t k = 0; k < D; ++k) {
              const std::size_t o = (i * H + j) * D + k;
              const double* gw = yv.data() + (C + c) * plane;
              const double* gh = yv.data() + (C + dm + c) * plane;
              const double* gd = yv.data() + (C + 2 * dm + c) * plane;
              constant = constant && gw[o] == gw[(i * H) * D] && gh[o] == gh[j * D] && gd[o] == gd[k];
            }
      if (!constant) fail("broadcast not constant");
      for (const auto& a : trace.attention.attention) {
        const std::size_t T = a.dim(0);
        const auto av = a.values();
        for (std::size_t row = 0; row < T; ++row) {
          double sum = 0.0;
          for (std::size_t col = 0; col < T; ++col) sum += av[row * T + col];
          worst_row = std::max(worst_row, std::abs(sum - 1.0));
        }
      }
    }
    if (worst_row > 1e-12) ++failures;
    r.passed = failures == 0;
    r.detail = std::to_string(shapes) + " shapes, max |row sum - 1| = " + fmt("%.2e", worst_row) +
               (first_failure.empty() ? "" : "; " + first_failure);
  });
}

CheckResult check_loss_sanity(const VerifyOptions& opt, std::size_t random_inputs) {
  return timed("loss_sanity", [&](CheckResult& r) {
    Rng rng(opt.seed + 3);
    double worst_perfect = 0.0;
    for (int t = 0; t < 20; ++t) {
      const std::size_t k = 2 + rng.below(3);
      const Extents3 d = random_dims(rng, 2, 5);
      const auto lab = random_labels(d[0] * d[1] * d[2], k, rng);
      const Tensor l = one_hot(lab, k, d);
      // Saturated logits: softmax equals the one-hot target to ~1e-22.
      const Tensor z = ops::scale(l, 60.0);
      worst_perfect = std::max(worst_perfect, std::abs(soft_dice_ce_loss(z, l).item()));
    }
    const Tensor l2 = one_hot(random_labels(8, 2, rng), 2, {2, 2, 2});
    const double ce = soft_dice_ce_terms(Tensor::zeros({2, 2, 2, 2}), l2).ce;
    const double ce_err = std::abs(ce - std::log(2.0));
    double min_loss = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < random_inputs; ++t) {
      const std::size_t k = 2 + rng.below(3);
      const Extents3 d = random_dims(rng, 1, 4);
      const std::size_t n = d[0] * d[1] * d[2];
      std::vector<double> lab(n);
      for (double& v : lab) v = static_cast<double>(rng.below(k));
      const Tensor z = random_tensor({k, d[0], d[1], d[2]}, rng, 3.0);
      min_loss = std::min(min_loss, soft_dice_ce_loss(z, one_hot(lab, k, d)).item());
    }
    r.passed = worst_perfect <= 1e-9 && ce_err <= 1e-9 && min_loss >= 0.0;
    r.detail = fmt("perfect |L| max %.2e, |CE - ln2| %.2e", worst_perfect, ce_err) +
               fmt(", min random loss %.4f", min_loss);
  });
}

CheckResult check_nsd_oracle(const VerifyOptions& opt, std::size_t volumes) {
  return timed("nsd_oracle", [&](CheckResult& r) {
    Rng rng(opt.seed + 4);
    const Spacing spacings[] = {{1, 1, 1}, {0.5, 1, 2}, {1.5, 0.7, 3}, {2, 2, 0.5}};
    const double taus[] = {0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 5.0};
    const ClassSet sets[] = {{1}, {2}, {1, 2}};
    std::size_t comparisons = 0, mismatches = 0;
    for (std::size_t v = 0; v < volumes; ++v) {
      const Extents3 d = random_dims(rng, 1, 6);
      const std::size_t n = d[0] * d[1] * d[2];
      // Mix sparse, dense and empty masks.
      const double density = rng.uniform(0.0, 1.0);
      std::vector<double> a(n), b(n);
      for (std::size_t j = 0; j < n; ++j) {
        a[j] = rng.bernoulli(density) ? static_cast<double>(1 + rng.below(2)) : 0.0;
        b[j] = rng.bernoulli(density) ? static_cast<double>(1 + rng.below(2)) : 0.0;
      }
      const Volume pa = Volume::labels(d, a), pb = Volume::labels(d, b);
      Spacing sp = spacings[rng.below(4)];
      if (rng.bernoulli(0.3))
        for (double& s : sp) s = rng.uniform(0.3, 3.0);
      const ClassSet& cs = sets[rng.below(3)];
      for (double tau : taus) {
        ++comparisons;
        if (nsd(pa, pb, cs, tau, sp) != nsd_bruteforce(pa, pb, cs, tau, sp)) ++mismatches;
      }
    }
    r.passed = mismatches == 0;
    r.detail = std::to_string(comparisons) + " comparisons, " + std::to_string(mismatches) + " mismatches";
  });
}

CheckResult check_resampling(const VerifyOptions& opt, std::size_t cases) {
  return timed("resampling", [&](CheckResult& r) {
    Rng rng(opt.seed + 5);
    std::size_t const_fail = 0, novel_ids = 0;
    double ramp_err = 0.0;
    std::size_t ramp_checked = 0;
    for (std::size_t t = 0; t < cases; ++t) {
      const Extents3 in = random_dims(rng, 2, 9);
      const Extents3 out = random_dims(rng, 2, 12);
      const std::size_t n = in[0] * in[1] * in[2];
      Spacing sp{};
      for (double& s : sp) s = rng.uniform(0.5, 4.0);
      const Spacing to{1.0, 1.0, 1.0};

      const double c = rng.uniform(-100.0, 100.0);
      const Volume cv = resample_image_to(Volume::image(in, std::vector<double>(n, c), sp), out, to);
      for (double v : cv.data) const_fail += v != c;

      // Ramps on a near-isotropic grid (no nearest-neighbour axis).
      const Spacing iso{1.0, 1.0 + rng.uniform(0.0, 0.5), 1.0};
      const double a0 = rng.uniform(-5, 5), g[3] = {rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)};
      std::vector<double> ramp(n);
      for (std::size_t i = 0; i < in[0]; ++i)
        for (std::size_t j = 0; j < in[1]; ++j)
          for (std::size_t k = 0; k < in[2]; ++k)
            ramp[(i * in[1] + j) * in[2] + k] = a0 + g[0] * static_cast<double>(i) +
                                                g[1] * static_cast<double>(j) + g[2] * static_cast<double>(k);
      const Volume rv = resample_image_to(Volume::image(in, ramp, iso), out, to);
      auto src = [&](std::size_t a, std::size_t o) {
        return (static_cast<double>(o) + 0.5) * static_cast<double>(in[a]) / static_cast<double>(out[a]) - 0.5;
      };
      auto interior = [&](std::size_t a, double x) {
        if (in[a] == out[a]) return true;
        const double f = std::floor(x);
        return f - 1.0 >= 0.0 && f + 2.0 <= static_cast<double>(in[a]) - 1.0;
      };
      for (std::size_t i = 0; i < out[0]; ++i)
        for (std::size_t j = 0; j < out[1]; ++j)
          for (std::size_t k = 0; k < out[2]; ++k) {
            const double x = in[0] == out[0] ? static_cast<double>(i) : src(0, i);
            const double y = in[1] == out[1] ? static_cast<double>(j) : src(1, j);
            const double z = in[2] == out[2] ? static_cast<double>(k) : src(2, k);
            if (!interior(0, x) || !interior(1, y) || !interior(2, z)) continue;
            const double expect = a0 + g[0] * x + g[1] * y + g[2] * z;
            ramp_err = std::max(ramp_err, std::abs(rv.data[(i * out[1] + j) * out[2] + k] - expect));
            ++ramp_checked;
          }

      const std::size_t k = 2 + rng.below(5);
      std::vector<bool> used(k, false);
      std::vector<double> lab(n);
      for (double& v : lab) {
        // Skip one id so "novel" outputs would be detectable.
        std::size_t id = rng.below(k);
        if (id == k / 2) id = 0;
        v = static_cast<double>(id);
        used[id] = true;
      }
      const Volume lv = resample_labels_to(Volume::labels(in, lab, sp), out, to, k);
      for (double v : lv.data) novel_ids += !used[static_cast<std::size_t>(v)];
    }
    r.passed = const_fail == 0 && ramp_err <= 1e-9 && novel_ids == 0;
    r.detail = std::to_string(cases) + " cases: constant mismatches " + std::to_string(const_fail) +
               fmt(", ramp max err %.2e", ramp_err) + " over " + std::to_string(ramp_checked) +
               " voxels, novel label ids " + std::to_string(novel_ids);
  });
}

CheckResult check_schedule(const VerifyOptions&) {
  return timed("schedule", [&](CheckResult& r) {
    bool ok = poly_lr(0, 1000, 0.01) == 0.01 && poly_lr(1000, 1000, 0.01) == 0.0;
    const double mid = poly_lr(500, 1000, 0.01);
    ok = ok && std::abs(mid - 0.0053589) <= 1e-7;
    for (std::size_t e = 1; e <= 1000; ++e) ok = ok && poly_lr(e, 1000, 0.01) < poly_lr(e - 1, 1000, 0.01);
    bool threw = false;
    try {
      poly_lr(1001, 1000, 0.01);
    } catch (const Error& e) {
      threw = e.kind() == ErrorKind::InvalidEpoch;
    }
    ok = ok && threw;

    // Two Nesterov steps on f(p) = a p^2 / 2 against the scalar recurrence.
    const double a = 1.7, lr = 0.1, mu = 0.9;
    double p = 2.0, v = 0.0;
    std::vector<double> pv{2.0}, vv{0.0};
    for (int step = 0; step < 2; ++step) {
      const double g = a * p;
      v = mu * v + g;
      p = p - lr * (g + mu * v);
      const std::vector<double> gv{a * pv[0]};
      sgd_nesterov_step(pv, gv, vv, lr, mu);
    }
    const bool nesterov = pv[0] == p && vv[0] == v;
    std::vector<double> q{1.5}, qv{0.3};
    sgd_nesterov_step(q, std::vector<double>{0.4}, qv, 0.0, 0.5);
    const bool lr_zero = q[0] == 1.5 && qv[0] == 0.5 * 0.3 + 0.4;
    std::vector<double> s{1.5}, sv{0.0};
    sgd_nesterov_step(s, std::vector<double>{0.4}, sv, 0.1, 0.0);
    const bool plain = s[0] == 1.5 - 0.1 * 0.4;
    r.passed = ok && nesterov && lr_zero && plain;
    r.detail = fmt("poly_lr(500/1000) = %.9f", mid) + (nesterov ? ", nesterov exact" : ", nesterov MISMATCH") +
               (lr_zero && plain ? "" : ", degenerate cases failed");
  });
}

CheckResult check_inference(const VerifyOptions& opt) {
  return timed("inference", [&](CheckResult& r) {
    Rng rng(opt.seed + 6);
    const std::size_t K = 3;
    PatchModel constant{1, K, [](const Tensor& x) {
                          std::vector<double> v;
                          const std::size_t n = x.numel();
                          for (std::size_t c = 0; c < K; ++c) v.insert(v.end(), n, 0.7 * static_cast<double>(c) - 0.4);
                          return Tensor::from({K, x.dim(1), x.dim(2), x.dim(3)}, std::move(v));
                        }};
    // Pointwise in the input values: flip-equivariant, position dependent
    // through the (random) input.
    PatchModel pointwise{1, K, [](const Tensor& x) {
                           const auto xv = x.values();
                           std::vector<double> v;
                           for (std::size_t c = 0; c < K; ++c)
                             for (double s : xv) v.push_back(std::sin(static_cast<double>(c + 1) * s));
                           return Tensor::from({K, x.dim(1), x.dim(2), x.dim(3)}, std::move(v));
                         }};
    // Depends on the voxel position inside the window: not flip-equivariant.
    PatchModel positional{1, K, [](const Tensor& x) {
                            const auto xv = x.values();
                            const std::size_t W = x.dim(1), H = x.dim(2), D = x.dim(3);
                            std::vector<double> v(K * xv.size());
                            for (std::size_t c = 0; c < K; ++c)
                              for (std::size_t i = 0; i < W; ++i)
                                for (std::size_t j = 0; j < H; ++j)
                                  for (std::size_t k = 0; k < D; ++k) {
                                    const std::size_t q = (i * H + j) * D + k;
                                    v[c * xv.size() + q] = xv[q] * static_cast<double>(c) +
                                                           0.3 * static_cast<double>(i * (c + 1)) -
                                                           0.2 * static_cast<double>(j + k * c);
                                  }
                            return Tensor::from({K, W, H, D}, std::move(v));
                          }};
    const Tensor vol = random_tensor({1, 19, 17, 21}, rng);
    SlidingWindowConfig swc;
    swc.patch = {8, 8, 8};

    double const_err = 0.0;
    std::vector<double> expect(K);
    {
      double s = 0.0;
      for (std::size_t c = 0; c < K; ++c) s += expect[c] = std::exp(0.7 * static_cast<double>(c) - 0.4);
      for (auto& e : expect) e /= s;
    }
    for (double ov : {0.0, 0.25, 0.5, 0.75}) {
      swc.overlap = ov;
      const Tensor p = sliding_window_predict(constant, vol, swc);
      const std::size_t nv = p.numel() / K;
      for (std::size_t c = 0; c < K; ++c)
        for (std::size_t j = 0; j < nv; ++j) const_err = std::max(const_err, std::abs(p.values()[c * nv + j] - expect[c]));
    }
    swc.overlap = 0.5;

    const Tensor fast = sliding_window_predict(positional, vol, swc);
    const auto dense = sliding_window_dense(positional, vol, swc);
    double dense_err = 0.0;
    for (std::size_t i = 0; i < dense.size(); ++i) dense_err = std::max(dense_err, std::abs(fast.values()[i] - dense[i]));

    std::size_t tiles = 1;
    for (int a = 0; a < 3; ++a) tiles *= window_starts(vol.dim(a + 1), swc.patch[a], swc.overlap).size();
    std::vector<std::size_t> order(tiles);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = tiles; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    const Tensor permuted = sliding_window_predict(positional, vol, swc, &order);
    double order_err = 0.0;
    for (std::size_t i = 0; i < dense.size(); ++i)
      order_err = std::max(order_err, std::abs(fast.values()[i] - permuted.values()[i]));

    const Tensor plain = sliding_window_predict(pointwise, vol, swc);
    const Tensor tta = tta_mirror_predict(pointwise, vol, swc);
    double tta_err = 0.0;
    for (std::size_t i = 0; i < plain.numel(); ++i) tta_err = std::max(tta_err, std::abs(plain.values()[i] - tta.values()[i]));

    double simplex_err = 0.0;
    for (const Tensor* t : {&fast, &plain, &tta}) {
      const std::size_t nv = t->numel() / K;
      for (std::size_t j = 0; j < nv; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < K; ++c) s += t->values()[c * nv + j];
        simplex_err = std::max(simplex_err, std::abs(s - 1.0));
      }
    }
    const Tensor tta_pos = tta_mirror_predict(positional, vol, swc);
    for (std::size_t j = 0; j < tta_pos.numel() / K; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < K; ++c) s += tta_pos.values()[c * (tta_pos.numel() / K) + j];
      simplex_err = std::max(simplex_err, std::abs(s - 1.0));
    }

    const auto gw = gaussian_importance({8, 8, 8}, 1.0 / 8.0);
    const double corner_err = std::abs(gw.front() - std::exp(-3.0 * 3.5 * 3.5 / 2.0));

    r.passed = const_err <= 1e-12 && dense_err <= 1e-12 && order_err <= 1e-12 && tta_err <= 1e-12 &&
               simplex_err <= 1e-9 && corner_err <= 1e-12;
    r.detail = fmt("constant %.1e, dense %.1e", const_err, dense_err) + fmt(", order %.1e, tta %.1e", order_err, tta_err) +
               fmt(", simplex %.1e, gaussian corner %.1e", simplex_err, corner_err);
  });
}

bool VerifyReport::all_passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

nlohmann::ordered_json VerifyReport::to_json() const {
  nlohmann::ordered_json j;
  j["passed"] = all_passed();
  j["max_grad_rel_error"] = max_grad_rel_error;
  auto arr = nlohmann::ordered_json::array();
  for (const auto& c : checks)
    arr.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}, {"seconds", c.seconds}});
  j["checks"] = std::move(arr);
  return j;
}

VerifyReport run_verify_suite(const VerifyOptions& opt) {
  VerifyReport rep;
  rep.checks.push_back(check_model_gradients(opt, &rep.max_grad_rel_error));
  rep.checks.push_back(check_op_gradients(opt));
  rep.checks.push_back(check_gasa_invariants(opt));
  rep.checks.push_back(check_loss_sanity(opt));
  rep.checks.push_back(check_nsd_oracle(opt));
  rep.checks.push_back(check_resampling(opt));
  rep.checks.push_back(check_schedule(opt));
  rep.checks.push_back(check_inference(opt));
  return rep;
}

}  // namespace gasa::verify
