#pragma once

#include <string>

#include "recal/ops.hpp"
#include "recal/params.hpp"

namespace recal {

/// A convolution together with its registered parameters. `in_channels` is
/// kept so audits can recount weights from the closed-form count instead of
/// the allocated array sizes.
struct ConvLayer {
  ConvSpec spec;
  int64_t in_channels = 0;
  Tensor4 weight;
  Tensor4 bias;  // undefined when spec.has_bias is false
};

ConvLayer make_conv(ParamStore& store, const std::string& prefix, int64_t in_channels,
                    const ConvSpec& spec);
Tensor4 apply(const ConvLayer& layer, const Tensor4& x);

/// Per-channel affine parameters of a normalization layer.
struct NormAffine {
  Tensor4 scale;
  Tensor4 shift;
};

NormAffine make_norm_affine(ParamStore& store, const std::string& prefix,
                            int64_t channels);

/// Region-wise squeeze: an average-pool pyramid (3/5/7, stride 1) and the
/// raw input each reduced to one channel by a 1x1 conv, concatenated and
/// fused by a 1x1 conv into a single sigmoid-squashed attention map.
/// 4C+4 weights.
struct ResBlockParams {
  ConvLayer pool3_proj;
  ConvLayer pool5_proj;
  ConvLayer pool7_proj;
  ConvLayer direct_proj;
  ConvLayer fuse;
};

ResBlockParams make_res_block(ParamStore& store, const std::string& prefix,
                              int64_t channels);
Tensor4 res_block(const Tensor4& x, const ResBlockParams& p);

/// Channel-wise squeeze: global average pool through a C -> C/r -> C
/// bottleneck of 1x1 convs, ReLU after each. C^2/r + C^2/r weights (C^2 at
/// the default r=2). Output is a non-negative (N,C,1,1) attention vector.
struct ChsBlockParams {
  ConvLayer squeeze;
  ConvLayer expand;
};

ChsBlockParams make_chs_block(ParamStore& store, const std::string& prefix,
                              int64_t channels, int64_t reduction = 2);
Tensor4 chs_block(const Tensor4& x, const ChsBlockParams& p);

/// Region-channel calibration unit. The input is rescaled by the region map
/// and by the channel map in parallel, each product layer-normalized, the
/// two results interleaved channel-pair-wise and fused by a grouped 3x3 conv
/// (groups = C) so that output channel p sees exactly its own
/// (channel-calibrated, region-calibrated) pair. Shape-preserving;
/// C^2 + 22C + 4 weights.
struct RecalModuleParams {
  int64_t channels = 0;
  ResBlockParams res;
  ChsBlockParams chs;
  NormAffine norm_region;
  NormAffine norm_channel;
  ConvLayer fuse;
};

RecalModuleParams make_recal_module(ParamStore& store, const std::string& prefix,
                                    int64_t channels, int64_t reduction = 2);
Tensor4 recal_module(const Tensor4& x, const RecalModuleParams& p);

/// Squeeze-and-excitation gate: global pool, C -> C/r -> C bottleneck with
/// ReLU then sigmoid, input rescaled by the gate. C^2 weights at r=2.
struct SeBlockParams {
  ConvLayer squeeze;
  ConvLayer expand;
};

SeBlockParams make_se_block(ParamStore& store, const std::string& prefix,
                            int64_t channels, int64_t reduction = 2);
Tensor4 se_block(const Tensor4& x, const SeBlockParams& p);

/// Concurrent spatial and channel SE: the SE-gated map and a spatial-gated
/// map (1x1 conv to one channel, sigmoid) merged by elementwise maximum.
/// C^2 + C weights.
struct ScseBlockParams {
  SeBlockParams se;
  ConvLayer spatial;
};

ScseBlockParams make_scse_block(ParamStore& store, const std::string& prefix,
                                int64_t channels, int64_t reduction = 2);
Tensor4 scse_block(const Tensor4& x, const ScseBlockParams& p);

}  // namespace recal
