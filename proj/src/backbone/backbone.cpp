#include "gasa/backbone.hpp"

#include "gasa/error.hpp"
#include "gasa/ops.hpp"

namespace gasa {

std::string_view to_string(Variant v) { return v == Variant::Large ? "large" : "base"; }

Variant parse_variant(std::string_view text) {
  if (text == "base") return Variant::Base;
  if (text == "large") return Variant::Large;
  throw Error(ErrorKind::InvalidConfig, "unknown variant '" + std::string(text) + "'");
}

void BackboneConfig::validate() const {
  if (in_channels == 0 || num_classes < 2)
    throw Error(ErrorKind::InvalidConfig, "need in_channels >= 1 and num_classes >= 2");
  if (stage_channels.size() < 2)
    throw Error(ErrorKind::InvalidConfig, "at least two encoder stages are required");
  for (auto c : stage_channels)
    if (c == 0) throw Error(ErrorKind::InvalidConfig, "stage widths must be positive");
  if (downsample_strides.size() != stage_channels.size() - 1)
    throw Error(ErrorKind::InvalidConfig, "need one downsample stride per stage after the first");
  std::size_t total = 1;
  for (auto s : downsample_strides) {
    if (s == 0) throw Error(ErrorKind::InvalidConfig, "strides must be positive");
    total *= s;
  }
  for (auto e : patch)
    if (e == 0 || e % total != 0)
      throw Error(ErrorKind::InvalidConfig, "patch extents must be positive multiples of " +
                                                std::to_string(total));
  if (!(leaky_slope >= 0.0)) throw Error(ErrorKind::InvalidConfig, "leaky slope must be >= 0");
  if (gasa_enabled) resolved_gasa().validate();
}

Extents3 BackboneConfig::bottleneck_extent() const {
  std::size_t total = 1;
  for (auto s : downsample_strides) total *= s;
  return {patch[0] / total, patch[1] / total, patch[2] / total};
}

GasaConfig BackboneConfig::resolved_gasa() const {
  GasaConfig g = gasa;
  g.in_channels = stage_channels.back();
  g.spatial = bottleneck_extent();
  return g;
}

std::size_t BackboneConfig::bottleneck_channels() const {
  return stage_channels.back() + (gasa_enabled ? 3 * gasa.d_model : 0);
}

namespace {

ConvNorm make_conv(std::size_t cin, std::size_t cout, std::size_t k, std::size_t stride, Rng& rng) {
  ConvNorm c;
  const std::size_t fan_in = cin * k * k * k;
  c.weight = init_uniform({cout, cin, k, k, k}, fan_in, rng);
  c.bias = init_uniform({cout}, fan_in, rng);
  c.gamma = Tensor::full({cout}, 1.0, true);
  c.beta = Tensor::zeros({cout}, true);
  c.stride = {stride, stride, stride};
  const std::size_t pad = k / 2;
  c.padding = {pad, pad, pad};
  return c;
}

void push_conv(ParamList& out, const std::string& prefix, const ConvNorm& c) {
  out.push_back({prefix + ".weight", c.weight});
  out.push_back({prefix + ".bias", c.bias});
  out.push_back({prefix + ".gamma", c.gamma});
  out.push_back({prefix + ".beta", c.beta});
}

Tensor conv_norm_act(const Tensor& x, const ConvNorm& c, double slope) {
  Tensor y = ops::conv3d(x, c.weight, c.bias, {c.stride, c.padding});
  return ops::leaky_relu(ops::instance_norm(y, c.gamma, c.beta), slope);
}

Tensor res_block(const Tensor& x, const ResBlock& r, double slope) {
  Tensor y = conv_norm_act(x, r.first, slope);
  y = ops::conv3d(y, r.second.weight, r.second.bias, {r.second.stride, r.second.padding});
  y = ops::instance_norm(y, r.second.gamma, r.second.beta);
  return ops::leaky_relu(ops::add(y, x), slope);
}

std::size_t res_blocks_for_stage(const BackboneConfig& cfg, std::size_t s) {
  if (cfg.variant != Variant::Large) return 0;
  return s + 1 == cfg.stages() ? cfg.large_final_res_blocks : cfg.large_res_blocks;
}

std::uint64_t conv_norm_params(std::uint64_t cin, std::uint64_t cout, std::uint64_t k) {
  return cout * cin * k * k * k + cout + 2 * cout;
}

std::uint64_t conv_flops(std::uint64_t cin, std::uint64_t cout, std::uint64_t k, std::uint64_t out_voxels) {
  return 2 * cin * cout * k * k * k * out_voxels + cout * out_voxels;
}

}  // namespace

ParamList ModelParams::parameters() const {
  ParamList out;
  for (std::size_t s = 0; s < encoder.size(); ++s) {
    const std::string p = "enc" + std::to_string(s);
    push_conv(out, p + ".entry", encoder[s].entry);
    push_conv(out, p + ".conv", encoder[s].conv);
    for (std::size_t r = 0; r < encoder[s].res.size(); ++r) {
      push_conv(out, p + ".res" + std::to_string(r) + ".a", encoder[s].res[r].first);
      push_conv(out, p + ".res" + std::to_string(r) + ".b", encoder[s].res[r].second);
    }
  }
  if (gasa) {
    auto g = gasa->parameters("gasa.");
    out.insert(out.end(), g.begin(), g.end());
  }
  for (std::size_t s = 0; s < decoder.size(); ++s) {
    const std::string p = "dec" + std::to_string(s);
    push_conv(out, p + ".up", decoder[s].up);
    push_conv(out, p + ".fuse", decoder[s].fuse);
    push_conv(out, p + ".conv", decoder[s].conv);
  }
  out.push_back({"head.weight", head_weight});
  out.push_back({"head.bias", head_bias});
  return out;
}

ModelParams build_model(const BackboneConfig& cfg, Rng& rng) {
  cfg.validate();
  ModelParams m;
  m.cfg = cfg;
  const std::size_t n = cfg.stages();
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t cin = s == 0 ? cfg.in_channels : cfg.stage_channels[s - 1];
    const std::size_t c = cfg.stage_channels[s];
    EncoderStage st;
    st.entry = make_conv(cin, c, 3, s == 0 ? 1 : cfg.downsample_strides[s - 1], rng);
    st.conv = make_conv(c, c, 3, 1, rng);
    for (std::size_t r = 0; r < res_blocks_for_stage(cfg, s); ++r)
      st.res.push_back({make_conv(c, c, 3, 1, rng), make_conv(c, c, 3, 1, rng)});
    m.encoder.push_back(std::move(st));
  }
  if (cfg.gasa_enabled) m.gasa = init_gasa_params(cfg.resolved_gasa(), rng);
  m.decoder.resize(n - 1);
  for (std::size_t s = n - 1; s-- > 0;) {
    const std::size_t c = cfg.stage_channels[s];
    const std::size_t cin = s + 2 == n ? cfg.bottleneck_channels() : cfg.stage_channels[s + 1];
    DecoderStage d;
    d.up = make_conv(cin, c, 1, 1, rng);
    d.fuse = make_conv(2 * c, c, 3, 1, rng);
    d.conv = make_conv(c, c, 3, 1, rng);
    m.decoder[s] = std::move(d);
  }
  const std::size_t c0 = cfg.stage_channels.front();
  m.head_weight = init_uniform({cfg.num_classes, c0, 1, 1, 1}, c0, rng);
  m.head_bias = init_uniform({cfg.num_classes}, c0, rng);
  return m;
}

Tensor unet_forward(const Tensor& x, const ModelParams& params, const ForwardOptions& opt, Rng& rng) {
  const auto& cfg = params.cfg;
  if (x.rank() != 4 || x.dim(0) != cfg.in_channels)
    throw Error(ErrorKind::ShapeMismatch, "model input " + shape_str(x.shape()) + " needs " +
                                              std::to_string(cfg.in_channels) + " channels");
  std::size_t total = 1;
  for (auto s : cfg.downsample_strides) total *= s;
  for (std::size_t a = 1; a < 4; ++a)
    if (x.dim(a) % total != 0)
      throw Error(ErrorKind::ShapeMismatch, "input extents " + shape_str(x.shape()) +
                                                " are not multiples of " + std::to_string(total));
  const double slope = cfg.leaky_slope;
  std::vector<Tensor> skips;
  Tensor h = x;
  for (const auto& st : params.encoder) {
    h = conv_norm_act(h, st.entry, slope);
    h = conv_norm_act(h, st.conv, slope);
    for (const auto& r : st.res) h = res_block(h, r, slope);
    skips.push_back(h);
  }
  if (params.gasa && !opt.bypass_gasa) {
    h = gasa_forward(h, *params.gasa, cfg.resolved_gasa(), opt.training, rng);
  } else if (params.gasa) {
    // Bypassed: pad the GASA channels with zeros so the decoder widths still match.
    const std::size_t extra = 3 * cfg.gasa.d_model;
    h = ops::concat0({h, Tensor::zeros({extra, h.dim(1), h.dim(2), h.dim(3)})});
  }
  for (std::size_t s = params.decoder.size(); s-- > 0;) {
    const auto& d = params.decoder[s];
    const std::size_t f = cfg.downsample_strides[s];
    h = ops::upsample_nearest(conv_norm_act(h, d.up, slope), {f, f, f});
    h = ops::concat0({h, skips[s]});
    h = conv_norm_act(h, d.fuse, slope);
    h = conv_norm_act(h, d.conv, slope);
  }
  return ops::conv3d(h, params.head_weight, params.head_bias);
}

std::uint64_t count_model_params(const BackboneConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.stages();
  std::uint64_t total = 0;
  for (std::size_t s = 0; s < n; ++s) {
    const std::uint64_t cin = s == 0 ? cfg.in_channels : cfg.stage_channels[s - 1];
    const std::uint64_t c = cfg.stage_channels[s];
    total += conv_norm_params(cin, c, 3) + conv_norm_params(c, c, 3);
    total += res_blocks_for_stage(cfg, s) * 2 * conv_norm_params(c, c, 3);
  }
  if (cfg.gasa_enabled) total += count_gasa_params(cfg.resolved_gasa());
  for (std::size_t s = 0; s + 1 < n; ++s) {
    const std::uint64_t c = cfg.stage_channels[s];
    const std::uint64_t cin = s + 2 == n ? cfg.bottleneck_channels() : cfg.stage_channels[s + 1];
    total += conv_norm_params(cin, c, 1) + conv_norm_params(2 * c, c, 3) + conv_norm_params(c, c, 3);
  }
  total += cfg.num_classes * cfg.stage_channels.front() + cfg.num_classes;
  return total;
}

std::uint64_t count_model_flops(const BackboneConfig& cfg, const Extents3& input) {
  cfg.validate();
  const std::size_t n = cfg.stages();
  std::vector<std::uint64_t> voxels(n);
  Extents3 e = input;
  for (std::size_t s = 0; s < n; ++s) {
    if (s > 0)
      for (auto& x : e) x /= cfg.downsample_strides[s - 1];
    voxels[s] = static_cast<std::uint64_t>(e[0]) * e[1] * e[2];
  }
  std::uint64_t total = 0;
  for (std::size_t s = 0; s < n; ++s) {
    const std::uint64_t cin = s == 0 ? cfg.in_channels : cfg.stage_channels[s - 1];
    const std::uint64_t c = cfg.stage_channels[s];
    total += conv_flops(cin, c, 3, voxels[s]) + conv_flops(c, c, 3, voxels[s]);
    total += res_blocks_for_stage(cfg, s) * 2 * conv_flops(c, c, 3, voxels[s]);
  }
  if (cfg.gasa_enabled) {
    GasaConfig g = cfg.resolved_gasa();
    g.spatial = e;
    total += count_gasa_flops(g);
  }
  for (std::size_t s = 0; s + 1 < n; ++s) {
    const std::uint64_t c = cfg.stage_channels[s];
    const std::uint64_t cin = s + 2 == n ? cfg.bottleneck_channels() : cfg.stage_channels[s + 1];
    total += conv_flops(cin, c, 1, voxels[s + 1]);
    total += conv_flops(2 * c, c, 3, voxels[s]) + conv_flops(c, c, 3, voxels[s]);
  }
  total += conv_flops(cfg.stage_channels.front(), cfg.num_classes, 1, voxels[0]);
  return total;
}

}  // namespace gasa
