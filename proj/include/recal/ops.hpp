#pragma once

#include "recal/tensor.hpp"

namespace recal {

/// Hyper-parameters of a 2-D convolution. Weight layout is
/// (out_channels, in_channels/groups, kh, kw).
struct ConvSpec {
  int64_t kh = 1;
  int64_t kw = 1;
  int64_t out_channels = 0;
  int64_t groups = 1;
  int64_t ph = 0;
  int64_t pw = 0;
  int64_t sh = 1;
  int64_t sw = 1;
  bool has_bias = true;

  /// Learnable weights excluding bias: (kh*kw*in_channels*out_channels)/groups.
  int64_t weight_count(int64_t in_channels) const;
  Shape4 weight_shape(int64_t in_channels) const;
  Shape4 bias_shape() const { return Shape4{1, out_channels, 1, 1}; }
};

/// 2-D convolution. `bias` may be a default-constructed tensor when
/// spec.has_bias is false. Differentiable w.r.t. input, weights and bias.
Tensor4 conv2d(const Tensor4& x, const ConvSpec& spec, const Tensor4& weight,
               const Tensor4& bias);

/// Average pooling with same-size zero padding (odd kernels only). The
/// divisor is the full kernel area, padded cells included, so border outputs
/// are damped rather than renormalized.
Tensor4 avg_pool(const Tensor4& x, int64_t kh, int64_t kw, int64_t stride = 1);

/// Spatial mean per channel, output (N,C,1,1).
Tensor4 global_avg_pool(const Tensor4& x);

/// 2x2 stride-2 max pooling; requires even H and W. Gradient routes to the
/// first-occurring argmax of each window.
Tensor4 max_pool2(const Tensor4& x);

/// Doubles H and W with bilinear interpolation, half-pixel centers
/// (align-corners off). Exact on constant fields.
Tensor4 bilinear_upsample2(const Tensor4& x);

Tensor4 relu(const Tensor4& x);
Tensor4 sigmoid(const Tensor4& x);

/// Elementwise product. Shapes must match, or `b` may broadcast in exactly
/// two attention-map forms: (N,1,H,W) across channels, or (N,C,1,1) across
/// space.
Tensor4 elementwise_mul(const Tensor4& a, const Tensor4& b);

/// Elementwise maximum of same-shaped tensors; on ties the gradient routes
/// to `a`.
Tensor4 elementwise_max(const Tensor4& a, const Tensor4& b);

/// Depth-wise concatenation: (N,Ca,H,W) + (N,Cb,H,W) -> (N,Ca+Cb,H,W).
Tensor4 channel_concat(const Tensor4& a, const Tensor4& b);

/// Pairwise channel interleave of two same-shaped maps: output channel 2p
/// carries `ch` channel p and output channel 2p+1 carries `re` channel p
/// (0-based), i.e. [ch0, re0, ch1, re1, ...].
Tensor4 interleave_channels(const Tensor4& ch, const Tensor4& re);

/// Batch normalization over (N,H,W) per channel. scale/shift are learnable
/// (1,C,1,1) tensors; running_mean/running_var are plain (1,C,1,1) buffers
/// updated in training mode (unbiased variance, exponential factor
/// `momentum`) and consumed in eval mode. Training mode requires N*H*W >= 2.
Tensor4 batch_norm(const Tensor4& x, const Tensor4& scale, const Tensor4& shift,
                   Tensor4& running_mean, Tensor4& running_var, bool training,
                   real momentum = real(0.1), real eps = real(1e-5));

/// Layer normalization per sample over (C,H,W) with per-channel affine
/// parameters, shapes (1,C,1,1).
Tensor4 layer_norm(const Tensor4& x, const Tensor4& scale, const Tensor4& shift,
                   real eps = real(1e-5));

/// Sum of all elements, shape (1,1,1,1).
Tensor4 sum_all(const Tensor4& x);

/// Training loss: lambda * mean binary cross-entropy minus (1-lambda) times
/// the log of the sigma-smoothed soft Dice ratio, sums taken over the whole
/// batch. Predictions must lie strictly in (0,1) and truth must be binary.
/// Implemented as one fused node with an analytic gradient.
Tensor4 bce_log_dice_loss(const Tensor4& pred, const Tensor4& truth, real lambda,
                          real sigma);

}  // namespace recal
