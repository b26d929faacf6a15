#include <cmath>

#include <gtest/gtest.h>

#include "gasa/backbone.hpp"
#include "gasa/gasa_block.hpp"
#include "gasa/ops.hpp"
#include "gasa/verify.hpp"

namespace gasa {
namespace {

GasaConfig small_cfg(std::size_t C, Extents3 spatial, std::size_t dm, std::size_t heads) {
  GasaConfig g;
  g.in_channels = C;
  g.spatial = spatial;
  g.d_model = dm;
  g.heads = heads;
  return g;
}

TEST(GasaBlock, ParamCountHandExample) {
  GasaConfig g = small_cfg(2, {2, 2, 2}, 2, 1);
  g.use_layer_norm = false;
  EXPECT_EQ(count_gasa_params(g), 90u);
  Rng rng(0);
  EXPECT_EQ(count_scalars(init_gasa_params(g, rng).parameters()), 90u);
}

TEST(GasaBlock, ParamCountMatchesRegistryWithLayerNorm) {
  GasaConfig g = small_cfg(3, {4, 5, 6}, 6, 2);
  g.use_layer_norm = true;
  Rng rng(0);
  EXPECT_EQ(count_gasa_params(g), count_scalars(init_gasa_params(g, rng).parameters()));
  GasaConfig g2 = g;
  g2.d_model = 12;
  EXPECT_GT(count_gasa_params(g2), 2 * count_gasa_params(g));
}

TEST(GasaBlock, TokenCountAndOutputChannels) {
  GasaConfig g = small_cfg(3, {4, 6, 8}, 25, 5);
  Rng rng(1);
  const GasaParams p = init_gasa_params(g, rng);
  const Tensor x = Tensor::zeros({3, 4, 6, 8});
  EXPECT_EQ(axial_project(x, p, g).tokens.dim(0), 18u);
  EXPECT_EQ(gasa_forward(x, p, g, false, rng).dim(0), 78u);
}

TEST(GasaBlock, ZeroInputGivesBiasTokens) {
  GasaConfig g = small_cfg(2, {3, 2, 4}, 4, 2);
  Rng rng(2);
  const GasaParams p = init_gasa_params(g, rng);
  const auto ps = axial_project(Tensor::zeros({2, 3, 2, 4}), p, g);
  for (int a = 0; a < 3; ++a)
    for (std::size_t r = 0; r < g.spatial[a]; ++r)
      for (std::size_t c = 0; c < 4; ++c)
        EXPECT_EQ(ps.tokens.values()[(ps.axis_offsets[a] + r) * 4 + c], p.proj[a].bias.values()[c]);
}

TEST(GasaBlock, ProjectionMatchesDenseDot) {
  GasaConfig g = small_cfg(3, {4, 4, 4}, 6, 2);
  Rng rng(3);
  const GasaParams p = init_gasa_params(g, rng);
  std::vector<double> xv(3 * 64);
  for (double& v : xv) v = rng.normal();
  const Tensor x = Tensor::from({3, 4, 4, 4}, xv);
  const PatchSequence ps = axial_project(x, p, g);
  const auto tokens = ps.tokens.values();
  const auto k = p.proj[0].weight.values();  // [d_model, C, 1, H, D]
  for (std::size_t o = 0; o < 6; ++o) {
    double s = p.proj[0].bias.values()[o];
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t j = 0; j < 4; ++j)
        for (std::size_t l = 0; l < 4; ++l) s += k[((o * 3 + c) * 4 + j) * 4 + l] * xv[((c * 4 + 2) * 4 + j) * 4 + l];
    EXPECT_NEAR(tokens[2 * 6 + o], s, 1e-12);
  }
}

TEST(GasaBlock, SingleTokenAttentionIsValueProjection) {
  GasaConfig g = small_cfg(1, {1, 1, 1}, 2, 1);
  Rng rng(4);
  const GasaParams p = init_gasa_params(g, rng);
  PatchSequence ps;
  ps.tokens = Tensor::from({1, 2}, {0.4, -1.3});
  const auto r = mhsa(ps, p, g, false, rng);
  EXPECT_DOUBLE_EQ(r.attention[0].item(), 1.0);
  const Tensor v = ops::add_row_bias(ops::matmul(ps.tokens, p.wv.weight), p.wv.bias);
  const Tensor expect = ops::add_row_bias(ops::matmul(v, p.wo.weight), p.wo.bias);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(r.out.values()[i], expect.values()[i], 1e-14);
}

TEST(GasaBlock, MhsaMatchesScalarEvaluation) {
  GasaConfig g = small_cfg(1, {1, 1, 1}, 2, 1);
  Rng rng(5);
  GasaParams p = init_gasa_params(g, rng);
  const double t[3][2] = {{0.5, -1.0}, {1.5, 0.25}, {-0.75, 2.0}};
  PatchSequence ps;
  ps.tokens = Tensor::from({3, 2}, {t[0][0], t[0][1], t[1][0], t[1][1], t[2][0], t[2][1]});
  const auto r = mhsa(ps, p, g, false, rng);
  auto lin = [](const Linear& L, const double* x, double* y) {
    for (int o = 0; o < 2; ++o) {
      y[o] = L.bias.values()[o];
      for (int i = 0; i < 2; ++i) y[o] += x[i] * L.weight.values()[i * 2 + o];
    }
  };
  double q[3][2], k[3][2], v[3][2];
  for (int i = 0; i < 3; ++i) {
    lin(p.wq, t[i], q[i]);
    lin(p.wk, t[i], k[i]);
    lin(p.wv, t[i], v[i]);
  }
  for (int i = 0; i < 3; ++i) {
    double s[3], z = 0.0, mx = -1e300;
    for (int j = 0; j < 3; ++j) {
      s[j] = (q[i][0] * k[j][0] + q[i][1] * k[j][1]) / std::sqrt(2.0);
      mx = std::max(mx, s[j]);
    }
    for (int j = 0; j < 3; ++j) z += (s[j] = std::exp(s[j] - mx));
    double a[2] = {0, 0};
    for (int j = 0; j < 3; ++j)
      for (int c = 0; c < 2; ++c) a[c] += s[j] / z * v[j][c];
    double o[2];
    lin(p.wo, a, o);
    for (int c = 0; c < 2; ++c) EXPECT_NEAR(r.out.values()[i * 2 + c], o[c], 1e-13);
  }
}

TEST(GasaBlock, ExpandBroadcastAndFanOutGradient) {
  GasaConfig g = small_cfg(1, {2, 3, 4}, 2, 1);
  const Tensor ones = Tensor::full({9, 2}, 1.0);
  const Tensor expanded = axial_expand(ones, g);
  for (double v : expanded.values()) EXPECT_EQ(v, 1.0);
  Tensor att = Tensor::from({9, 2}, std::vector<double>(18, 0.5), true);
  backward(ops::sum(axial_expand(att, g)));
  EXPECT_EQ(att.grad()[0], 12.0);       // W row: h*d
  EXPECT_EQ(att.grad()[2 * 2], 8.0);    // H row: w*d
  EXPECT_EQ(att.grad()[5 * 2], 6.0);    // D row: w*h
  Tape::current().clear();
}

TEST(GasaBlock, PositionalEmbeddingModes) {
  const Tensor t = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor pe = Tensor::from({2, 2}, {0.5, 0.5, -1, 2}, true);
  EXPECT_EQ(add_positional_embedding(t, pe, PeMode::AfterMHSA).values()[3], 6.0);
  const Tensor none = add_positional_embedding(t, pe, PeMode::None);
  EXPECT_EQ(none.node_id(), t.node_id());
  const Tensor z = add_positional_embedding(t, Tensor::zeros({2, 2}), PeMode::BeforeMHSA);
  EXPECT_TRUE(std::equal(z.values().begin(), z.values().end(), t.values().begin()));
}

TEST(GasaBlock, EndToEndGradient) {
  GasaConfig g = small_cfg(2, {3, 4, 5}, 4, 2);
  g.pe_mode = PeMode::AfterMHSA;
  Rng rng(6);
  const GasaParams p = init_gasa_params(g, rng);
  for (double& v : Tensor(p.pe).mutable_values()) v = 0.1 * rng.normal();
  std::vector<double> xv(2 * 60), wv(14 * 60);
  for (double& v : xv) v = rng.normal();
  for (double& v : wv) v = rng.normal();
  Tensor x = Tensor::from({2, 3, 4, 5}, xv, true);
  const Tensor w = Tensor::from({14, 3, 4, 5}, wv);
  ParamList params = p.parameters();
  params.push_back({"x", x});
  auto loss = [&] {
    Rng unused(0);
    return ops::sum(ops::mul(gasa_forward(x, p, g, false, unused), w));
  };
  EXPECT_LT(verify::gradcheck(params, loss, 1e-5).max_rel_error, 1e-3);
}

TEST(Backbone, OutputShapeAndDeterminism) {
  BackboneConfig cfg;
  cfg.stage_channels = {2, 4};
  cfg.downsample_strides = {2};
  cfg.patch = {8, 8, 8};
  cfg.gasa.d_model = 4;
  cfg.gasa.heads = 2;
  Rng r1(9), r2(9);
  const ModelParams a = build_model(cfg, r1), b = build_model(cfg, r2);
  const auto pa = a.parameters(), pb = b.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const auto va = pa[i].tensor.values(), vb = pb[i].tensor.values();
    ASSERT_TRUE(std::equal(va.begin(), va.end(), vb.begin(), vb.end()));
  }
  EXPECT_EQ(count_scalars(pa), count_model_params(cfg));
  NoGradGuard ng;
  const Tensor y = unet_forward(Tensor::zeros({1, 8, 8, 8}), a, {}, r1);
  EXPECT_EQ(y.shape(), (Shape{3, 8, 8, 8}));
}

TEST(Backbone, PointwiseConvFlops) {
  BackboneConfig cfg;
  cfg.stage_channels = {2, 4};
  cfg.downsample_strides = {2};
  cfg.patch = {8, 8, 8};
  cfg.gasa_enabled = false;
  const auto base = count_model_flops(cfg, {8, 8, 8});
  cfg.num_classes = 4;
  // one more head channel: 1x1x1 conv from 2 channels over 512 voxels plus bias adds
  EXPECT_EQ(count_model_flops(cfg, {8, 8, 8}) - base, 2u * 2u * 512u + 512u);
}

TEST(Backbone, LargeVariantBuilds) {
  BackboneConfig cfg;
  cfg.stage_channels = {2, 4};
  cfg.downsample_strides = {2};
  cfg.patch = {8, 8, 8};
  cfg.variant = Variant::Large;
  cfg.gasa.d_model = 4;
  cfg.gasa.heads = 2;
  Rng rng(1);
  const ModelParams m = build_model(cfg, rng);
  EXPECT_EQ(count_scalars(m.parameters()), count_model_params(cfg));
  NoGradGuard ng;
  EXPECT_EQ(unet_forward(Tensor::zeros({1, 8, 8, 8}), m, {}, rng).shape(), (Shape{3, 8, 8, 8}));
}

}  // namespace
}  // namespace gasa
