#pragma once

// Global axial self-attention block.
//
// Three full-plane projections turn a feature volume X[C,W,H,D] into one
// d_model-token per slice along each axis (w + h + d tokens in total, ordered
// W, H, D). The tokens go through multi-head self-attention with no MLP, each
// attended token is broadcast back over the plane it was projected from, and
// the three axis groups are stacked as 3*d_model channels and concatenated
// behind the untouched input channels.

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "gasa/params.hpp"
#include "gasa/rng.hpp"
#include "gasa/tensor.hpp"

namespace gasa {

enum class PeMode { None, BeforeMHSA, AfterMHSA };

std::string_view to_string(PeMode mode);
/// Accepts "none", "before", "after". Throws InvalidConfig otherwise.
PeMode parse_pe_mode(std::string_view text);

struct GasaConfig {
  std::size_t d_model = 25;
  std::size_t heads = 5;
  PeMode pe_mode = PeMode::AfterMHSA;
  bool use_layer_norm = false;
  double dropout_p = 0.5;
  std::size_t in_channels = 1;
  Extents3 spatial{1, 1, 1};

  std::size_t tokens() const { return spatial[0] + spatial[1] + spatial[2]; }
  std::size_t head_dim() const { return d_model / heads; }
  /// Throws InvalidConfig.
  void validate() const;
};

struct Linear {
  Tensor weight;  // [in, out], y = x W + b
  Tensor bias;    // [out]
};

struct AffineNorm {
  Tensor gamma;
  Tensor beta;
};

struct GasaParams {
  // Index 0/1/2 = W/H/D axis. Kernels are [d_model, C, 1, H, D],
  // [d_model, C, W, 1, D] and [d_model, C, W, H, 1].
  std::array<Linear, 3> proj;
  Linear wq, wk, wv, wo;
  // Present iff use_layer_norm; applied after the Q, K, V projections.
  std::optional<std::array<AffineNorm, 3>> qkv_norm;
  Tensor pe;  // [(w+h+d), d_model]

  ParamList parameters(const std::string& prefix = "gasa.") const;
};

struct PatchSequence {
  Tensor tokens;                      // [(w+h+d), d_model]
  std::array<std::size_t, 3> axis_offsets{};  // first row of the W, H, D groups
};

struct MhsaResult {
  Tensor out;                      // [(w+h+d), d_model]
  std::vector<Tensor> attention;   // per head, [(w+h+d), (w+h+d)]
};

GasaParams init_gasa_params(const GasaConfig& cfg, Rng& rng);

PatchSequence axial_project(const Tensor& x, const GasaParams& params, const GasaConfig& cfg);

/// MLP-free multi-head self-attention; dropout (when training) is applied to
/// the output of the wo projection.
MhsaResult mhsa(const PatchSequence& p, const GasaParams& params, const GasaConfig& cfg,
                bool training, Rng& rng);

/// Broadcasts W-, H- and D-group tokens over their planes:
/// [(w+h+d), d_model] -> [3*d_model, W, H, D].
Tensor axial_expand(const Tensor& att, const GasaConfig& cfg);

/// tokens + pe unless mode is None, in which case `tokens` is returned as is.
Tensor add_positional_embedding(const Tensor& tokens, const Tensor& pe, PeMode mode);

struct GasaTrace {
  PatchSequence patches;
  MhsaResult attention;
};

/// x[C,W,H,D] -> [C + 3*d_model, W, H, D]; channels [0, C) are x itself.
Tensor gasa_forward(const Tensor& x, const GasaParams& params, const GasaConfig& cfg, bool training,
                    Rng& rng, GasaTrace* trace = nullptr);

/// Exact learnable-scalar count implied by the configuration.
std::uint64_t count_gasa_params(const GasaConfig& cfg);

/// Multiply-adds counted as 2 FLOPs plus one per bias add; projections,
/// Q/K/V/O projections and the two attention products.
std::uint64_t count_gasa_flops(const GasaConfig& cfg);

}  // namespace gasa
