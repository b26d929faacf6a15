#include "gasa/gasa_block.hpp"

#include <cmath>

#include "gasa/error.hpp"
#include "gasa/ops.hpp"

namespace gasa {

std::string_view to_string(PeMode mode) {
  switch (mode) {
    case PeMode::None: return "none";
    case PeMode::BeforeMHSA: return "before";
    case PeMode::AfterMHSA: return "after";
  }
  return "after";
}

PeMode parse_pe_mode(std::string_view text) {
  if (text == "none") return PeMode::None;
  if (text == "before") return PeMode::BeforeMHSA;
  if (text == "after") return PeMode::AfterMHSA;
  throw Error(ErrorKind::InvalidConfig, "unknown PE mode '" + std::string(text) + "'");
}

void GasaConfig::validate() const {
  if (d_model == 0 || heads == 0)
    throw Error(ErrorKind::InvalidConfig, "d_model and heads must be positive");
  if (d_model % heads != 0)
    throw Error(ErrorKind::InvalidConfig, "d_model " + std::to_string(d_model) +
                                              " is not divisible by heads " + std::to_string(heads));
  if (!(dropout_p >= 0.0 && dropout_p < 1.0))
    throw Error(ErrorKind::InvalidConfig, "dropout_p must lie in [0, 1)");
  if (in_channels == 0 || spatial[0] == 0 || spatial[1] == 0 || spatial[2] == 0)
    throw Error(ErrorKind::InvalidConfig, "GASA input channels and spatial extents must be positive");
}

ParamList GasaParams::parameters(const std::string& prefix) const {
  ParamList out;
  static constexpr const char* kAxis[3] = {"w", "h", "d"};
  for (int a = 0; a < 3; ++a) {
    out.push_back({prefix + "proj_" + kAxis[a] + ".weight", proj[a].weight});
    out.push_back({prefix + "proj_" + kAxis[a] + ".bias", proj[a].bias});
  }
  const std::pair<const char*, const Linear*> lin[] = {{"q", &wq}, {"k", &wk}, {"v", &wv}, {"o", &wo}};
  for (const auto& [name, l] : lin) {
    out.push_back({prefix + "w" + name + ".weight", l->weight});
    out.push_back({prefix + "w" + name + ".bias", l->bias});
  }
  if (qkv_norm) {
    static constexpr const char* kNorm[3] = {"q", "k", "v"};
    for (int i = 0; i < 3; ++i) {
      out.push_back({prefix + "ln_" + kNorm[i] + ".gamma", (*qkv_norm)[i].gamma});
      out.push_back({prefix + "ln_" + kNorm[i] + ".beta", (*qkv_norm)[i].beta});
    }
  }
  out.push_back({prefix + "pe", pe});
  return out;
}

namespace {

std::array<std::size_t, 3> plane_sizes(const Extents3& s) {
  return {s[1] * s[2], s[0] * s[2], s[0] * s[1]};
}

Linear init_linear(std::size_t in, std::size_t out, Rng& rng) {
  return {init_uniform({in, out}, in, rng), init_uniform({out}, in, rng)};
}

Tensor linear(const Tensor& x, const Linear& l) {
  return ops::add_row_bias(ops::matmul(x, l.weight), l.bias);
}

}  // namespace

GasaParams init_gasa_params(const GasaConfig& cfg, Rng& rng) {
  cfg.validate();
  GasaParams p;
  const auto& s = cfg.spatial;
  const auto planes = plane_sizes(s);
  const Shape kernels[3] = {{cfg.d_model, cfg.in_channels, 1, s[1], s[2]},
                            {cfg.d_model, cfg.in_channels, s[0], 1, s[2]},
                            {cfg.d_model, cfg.in_channels, s[0], s[1], 1}};
  for (int a = 0; a < 3; ++a) {
    const std::size_t fan_in = cfg.in_channels * planes[a];
    p.proj[a].weight = init_uniform(kernels[a], fan_in, rng);
    p.proj[a].bias = init_uniform({cfg.d_model}, fan_in, rng);
  }
  p.wq = init_linear(cfg.d_model, cfg.d_model, rng);
  p.wk = init_linear(cfg.d_model, cfg.d_model, rng);
  p.wv = init_linear(cfg.d_model, cfg.d_model, rng);
  p.wo = init_linear(cfg.d_model, cfg.d_model, rng);
  if (cfg.use_layer_norm) {
    std::array<AffineNorm, 3> norms;
    for (auto& n : norms) {
      n.gamma = Tensor::full({cfg.d_model}, 1.0, true);
      n.beta = Tensor::zeros({cfg.d_model}, true);
    }
    p.qkv_norm = norms;
  }
  p.pe = Tensor::zeros({cfg.tokens(), cfg.d_model}, true);
  return p;
}

PatchSequence axial_project(const Tensor& x, const GasaParams& params, const GasaConfig& cfg) {
  if (x.rank() != 4 || x.dim(0) != cfg.in_channels || x.dim(1) != cfg.spatial[0] ||
      x.dim(2) != cfg.spatial[1] || x.dim(3) != cfg.spatial[2])
    throw Error(ErrorKind::ShapeMismatch,
                "GASA input " + shape_str(x.shape()) + " does not match configured [" +
                    std::to_string(cfg.in_channels) + "," + std::to_string(cfg.spatial[0]) + "," +
                    std::to_string(cfg.spatial[1]) + "," + std::to_string(cfg.spatial[2]) + "]");
  std::vector<Tensor> groups;
  groups.reserve(3);
  for (int a = 0; a < 3; ++a) {
    // Kernel spans the whole orthogonal plane: one output position per slice.
    Tensor y = ops::conv3d(x, params.proj[a].weight, params.proj[a].bias);
    const std::size_t n = cfg.spatial[a];
    groups.push_back(ops::transpose(ops::reshape(y, {cfg.d_model, n})));
  }
  PatchSequence seq;
  seq.tokens = ops::concat0(groups);
  seq.axis_offsets = {0, cfg.spatial[0], cfg.spatial[0] + cfg.spatial[1]};
  return seq;
}

MhsaResult mhsa(const PatchSequence& p, const GasaParams& params, const GasaConfig& cfg,
                bool training, Rng& rng) {
  const Tensor& tokens = p.tokens;
  if (tokens.rank() != 2 || tokens.dim(1) != cfg.d_model)
    throw Error(ErrorKind::ShapeMismatch, "mhsa expects [T, " + std::to_string(cfg.d_model) +
                                              "] tokens, got " + shape_str(tokens.shape()));
  Tensor q = linear(tokens, params.wq);
  Tensor k = linear(tokens, params.wk);
  Tensor v = linear(tokens, params.wv);
  if (params.qkv_norm) {
    const auto& n = *params.qkv_norm;
    q = ops::layer_norm(q, n[0].gamma, n[0].beta);
    k = ops::layer_norm(k, n[1].gamma, n[1].beta);
    v = ops::layer_norm(v, n[2].gamma, n[2].beta);
  }
  const std::size_t dk = cfg.head_dim();
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  MhsaResult result;
  std::vector<Tensor> heads;
  heads.reserve(cfg.heads);
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    Tensor qh = ops::slice_cols(q, h * dk, (h + 1) * dk);
    Tensor kh = ops::slice_cols(k, h * dk, (h + 1) * dk);
    Tensor vh = ops::slice_cols(v, h * dk, (h + 1) * dk);
    Tensor scores = ops::scale(ops::matmul(qh, ops::transpose(kh)), inv_sqrt_dk);
    Tensor weights = ops::softmax_lastdim(scores);
    heads.push_back(ops::matmul(weights, vh));
    result.attention.push_back(weights);
  }
  Tensor mixed = linear(cfg.heads == 1 ? heads.front() : ops::concat_cols(heads), params.wo);
  result.out = ops::dropout(mixed, cfg.dropout_p, training, rng);
  return result;
}

Tensor axial_expand(const Tensor& att, const GasaConfig& cfg) {
  const std::size_t W = cfg.spatial[0], H = cfg.spatial[1], D = cfg.spatial[2];
  const std::size_t dm = cfg.d_model;
  if (att.rank() != 2 || att.dim(0) != W + H + D || att.dim(1) != dm)
    throw Error(ErrorKind::ShapeMismatch, "axial_expand expects [" + std::to_string(W + H + D) + "," +
                                              std::to_string(dm) + "], got " + shape_str(att.shape()));
  auto a = att.values();
  const std::size_t plane = W * H * D;
  std::vector<double> out(3 * dm * plane);
  for (std::size_t c = 0; c < dm; ++c) {
    double* gw = out.data() + c * plane;
    double* gh = out.data() + (dm + c) * plane;
    double* gd = out.data() + (2 * dm + c) * plane;
    for (std::size_t i = 0; i < W; ++i)
      for (std::size_t j = 0; j < H; ++j)
        for (std::size_t k = 0; k < D; ++k) {
          const std::size_t o = (i * H + j) * D + k;
          gw[o] = a[i * dm + c];
          gh[o] = a[(W + j) * dm + c];
          gd[o] = a[(W + H + k) * dm + c];
        }
  }
  return make_result({3 * dm, W, H, D}, std::move(out), {att},
                     [att, W, H, D, dm, plane](std::span<const double> g, std::span<const double>) {
                       double* ga = grad_sink(att);
                       if (!ga) return;
                       for (std::size_t c = 0; c < dm; ++c) {
                         const double* gw = g.data() + c * plane;
                         const double* gh = g.data() + (dm + c) * plane;
                         const double* gd = g.data() + (2 * dm + c) * plane;
                         for (std::size_t i = 0; i < W; ++i)
                           for (std::size_t j = 0; j < H; ++j)
                             for (std::size_t k = 0; k < D; ++k) {
                               const std::size_t o = (i * H + j) * D + k;
                               ga[i * dm + c] += gw[o];
                               ga[(W + j) * dm + c] += gh[o];
                               ga[(W + H + k) * dm + c] += gd[o];
                             }
                       }
                     });
}

Tensor add_positional_embedding(const Tensor& tokens, const Tensor& pe, PeMode mode) {
  if (tokens.shape() != pe.shape())
    throw Error(ErrorKind::ShapeMismatch, "positional embedding " + shape_str(pe.shape()) +
                                              " vs tokens " + shape_str(tokens.shape()));
  if (mode == PeMode::None) return tokens;
  return ops::add(tokens, pe);
}

Tensor gasa_forward(const Tensor& x, const GasaParams& params, const GasaConfig& cfg, bool training,
                    Rng& rng, GasaTrace* trace) {
  PatchSequence seq = axial_project(x, params, cfg);
  if (cfg.pe_mode == PeMode::BeforeMHSA)
    seq.tokens = add_positional_embedding(seq.tokens, params.pe, cfg.pe_mode);
  MhsaResult att = mhsa(seq, params, cfg, training, rng);
  Tensor attended = att.out;
  if (cfg.pe_mode == PeMode::AfterMHSA)
    attended = add_positional_embedding(attended, params.pe, cfg.pe_mode);
  Tensor feature = axial_expand(attended, cfg);
  if (trace) {
    trace->patches = seq;
    trace->attention = att;
  }
  return ops::concat0({x, feature});
}

std::uint64_t count_gasa_params(const GasaConfig& cfg) {
  const std::uint64_t dm = cfg.d_model;
  std::uint64_t n = 0;
  for (auto plane : plane_sizes(cfg.spatial)) n += cfg.in_channels * plane * dm + dm;
  n += 4 * (dm * dm + dm);
  if (cfg.use_layer_norm) n += 3 * 2 * dm;
  n += cfg.tokens() * dm;
  return n;
}

std::uint64_t count_gasa_flops(const GasaConfig& cfg) {
  const std::uint64_t dm = cfg.d_model;
  const std::uint64_t voxels = cfg.spatial[0] * cfg.spatial[1] * cfg.spatial[2];
  const std::uint64_t t = cfg.tokens();
  std::uint64_t f = 0;
  for (int a = 0; a < 3; ++a) f += 2 * cfg.in_channels * voxels * dm + dm * cfg.spatial[a];
  f += 4 * (2 * t * dm * dm + t * dm);
  f += 4 * t * t * dm;  // QK^T and AV summed over heads
  return f;
}

}  // namespace gasa
