#pragma once

// Compact 3D encoder-decoder hosting the GASA block at the bottleneck.
//
// Encoder stage s: conv3 (stride 2 for s > 0) -> conv3, each followed by
// instance norm and leaky ReLU; the Large variant appends residual blocks
// (3 per stage, 5 on the last). GASA runs on the deepest feature map. Decoder
// stage s: 1x1x1 conv + nearest upsample, concat with encoder skip s, then two
// conv3 blocks. A 1x1x1 head produces class logits at input resolution.

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "gasa/gasa_block.hpp"
#include "gasa/params.hpp"
#include "gasa/rng.hpp"
#include "gasa/tensor.hpp"

namespace gasa {

enum class Variant { Base, Large };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view text);

struct BackboneConfig {
  std::size_t in_channels = 1;
  std::size_t num_classes = 3;
  std::vector<std::size_t> stage_channels{8, 16, 32};
  /// Isotropic downsampling factor entering stages 1..n-1.
  std::vector<std::size_t> downsample_strides{2, 2};
  /// Training patch extents; fixes the GASA token geometry.
  Extents3 patch{16, 16, 16};
  bool gasa_enabled = true;
  /// d_model, heads, pe_mode, use_layer_norm, dropout_p are read from here;
  /// in_channels and spatial are derived (see resolved_gasa()).
  GasaConfig gasa{};
  Variant variant = Variant::Base;
  std::size_t large_res_blocks = 3;
  std::size_t large_final_res_blocks = 5;
  double leaky_slope = 0.01;

  /// Throws InvalidConfig.
  void validate() const;
  std::size_t stages() const { return stage_channels.size(); }
  Extents3 bottleneck_extent() const;
  GasaConfig resolved_gasa() const;
  std::size_t bottleneck_channels() const;
};

struct ConvNorm {
  Tensor weight, bias, gamma, beta;
  Extents3 stride{1, 1, 1};
  Extents3 padding{1, 1, 1};
};

struct ResBlock {
  ConvNorm first, second;
};

struct EncoderStage {
  ConvNorm entry, conv;
  std::vector<ResBlock> res;
};

struct DecoderStage {
  ConvNorm up;  // 1x1x1 at the coarse resolution, then nearest upsample
  ConvNorm fuse, conv;
};

struct ModelParams {
  BackboneConfig cfg;
  std::vector<EncoderStage> encoder;
  std::optional<GasaParams> gasa;
  std::vector<DecoderStage> decoder;  // decoder[s] produces stage s resolution
  Tensor head_weight, head_bias;

  ParamList parameters() const;
};

/// Throws InvalidConfig. Deterministic in (cfg, rng state).
ModelParams build_model(const BackboneConfig& cfg, Rng& rng);

struct ForwardOptions {
  bool training = false;
  /// Skip the GASA block even if the model has one (ablation path).
  bool bypass_gasa = false;
};

/// x[in_channels, W, H, D] -> logits[num_classes, W, H, D].
Tensor unet_forward(const Tensor& x, const ModelParams& params, const ForwardOptions& opt, Rng& rng);

std::uint64_t count_model_params(const BackboneConfig& cfg);
/// Convolutions and matmuls only; a multiply-add is 2 FLOPs and each bias add 1.
std::uint64_t count_model_flops(const BackboneConfig& cfg, const Extents3& input);

}  // namespace gasa
