#pragma once

// Differentiable primitives. Every op validates shapes (ShapeMismatch) and
// records its backward on the current tape when an input requires a gradient.

#include <cstdint>
#include <vector>

#include "gasa/rng.hpp"
#include "gasa/tensor.hpp"

namespace gasa::ops {

// ---- elementwise / reductions ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
/// x[m, n] + bias[n] broadcast over rows.
Tensor add_row_bias(const Tensor& x, const Tensor& bias);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor leaky_relu(const Tensor& x, double slope);

/// While alive, hashes the sign pattern of every leaky_relu input evaluated
/// on this thread. Finite-difference checks compare signatures to detect
/// stencils that straddle a kink. Not reentrant.
class KinkRecorder {
 public:
  KinkRecorder();
  ~KinkRecorder();
  KinkRecorder(const KinkRecorder&) = delete;
  KinkRecorder& operator=(const KinkRecorder&) = delete;

  std::uint64_t signature() const { return hash_; }
  void reset() { hash_ = kSeed; }

 private:
  friend Tensor leaky_relu(const Tensor&, double);
  static constexpr std::uint64_t kSeed = 1469598103934665603ull;
  std::uint64_t hash_ = kSeed;
};

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

/// Stable softmax along the last axis (max subtracted per slice). NaN inputs
/// propagate to NaN outputs.
Tensor softmax_lastdim(const Tensor& t);

// ---- normalisation / regularisation ----
inline constexpr double kNormEpsilon = 1e-5;

/// Normalises each last-axis slice to zero mean / unit variance (population
/// variance + eps), then applies gamma/beta of the last extent.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = kNormEpsilon);

/// x[C, ...]: normalises each channel over all remaining axes, then applies
/// per-channel gamma/beta.
Tensor instance_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                     double eps = kNormEpsilon);

/// Inverted dropout. Identity (same handle) when !training or p == 0.
/// Throws InvalidProbability unless 0 <= p < 1.
Tensor dropout(const Tensor& x, double p, bool training, Rng& rng);

// ---- convolution / resampling ----
struct Conv3dOptions {
  Extents3 stride{1, 1, 1};
  Extents3 padding{0, 0, 0};
};

/// x[Cin,W,H,D] * w[Cout,Cin,kw,kh,kd] + b[Cout]. Output extent per axis is
/// floor((in + 2*pad - k) / stride) + 1. Throws ShapeMismatch or KernelTooLarge.
Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& b, const Conv3dOptions& opt = {});

/// x[C,W,H,D] -> [C, W*fw, H*fh, D*fd] by voxel replication.
Tensor upsample_nearest(const Tensor& x, const Extents3& factor);

// ---- shape manipulation ----
Tensor reshape(const Tensor& t, Shape shape);
/// Generic axis permutation: out.shape[i] = in.shape[axes[i]].
Tensor permute(const Tensor& t, const std::vector<std::size_t>& axes);
/// Concatenation along axis 0 (row-major: buffers are appended).
Tensor concat0(const std::vector<Tensor>& parts);
/// Rows [begin, end) along axis 0.
Tensor slice0(const Tensor& t, std::size_t begin, std::size_t end);
/// Columns [begin, end) of a 2-D tensor.
Tensor slice_cols(const Tensor& t, std::size_t begin, std::size_t end);
/// Concatenation of 2-D tensors along axis 1.
Tensor concat_cols(const std::vector<Tensor>& parts);

}  // namespace gasa::ops
