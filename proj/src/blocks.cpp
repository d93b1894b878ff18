#include "recal/blocks.hpp"

namespace recal {

ConvLayer make_conv(ParamStore& store, const std::string& prefix, int64_t in_channels,
                    const ConvSpec& spec) {
  ConvLayer layer;
  layer.spec = spec;
  layer.in_channels = in_channels;
  layer.weight = store.declare(prefix + ".weight", ParamKind::conv_weight,
                               spec.weight_shape(in_channels));
  if (spec.has_bias) {
    layer.bias = store.declare(prefix + ".bias", ParamKind::conv_bias, spec.bias_shape());
  }
  return layer;
}

Tensor4 apply(const ConvLayer& layer, const Tensor4& x) {
  return conv2d(x, layer.spec, layer.weight, layer.bias);
}

NormAffine make_norm_affine(ParamStore& store, const std::string& prefix,
                            int64_t channels) {
  NormAffine n;
  const Shape4 shape{1, channels, 1, 1};
  n.scale = store.declare(prefix + ".scale", ParamKind::norm_scale, shape);
  n.shift = store.declare(prefix + ".shift", ParamKind::norm_shift, shape);
  return n;
}

namespace {

ConvSpec conv1x1(int64_t out_channels) {
  ConvSpec s;
  s.kh = 1;
  s.kw = 1;
  s.out_channels = out_channels;
  return s;
}

}  // namespace

ResBlockParams make_res_block(ParamStore& store, const std::string& prefix,
                              int64_t channels) {
  ResBlockParams p;
  p.pool3_proj = make_conv(store, prefix + ".pool3_proj", channels, conv1x1(1));
  p.pool5_proj = make_conv(store, prefix + ".pool5_proj", channels, conv1x1(1));
  p.pool7_proj = make_conv(store, prefix + ".pool7_proj", channels, conv1x1(1));
  p.direct_proj = make_conv(store, prefix + ".direct_proj", channels, conv1x1(1));
  p.fuse = make_conv(store, prefix + ".fuse", 4, conv1x1(1));
  return p;
}

Tensor4 res_block(const Tensor4& x, const ResBlockParams& p) {
  Tensor4 d3 = apply(p.pool3_proj, avg_pool(x, 3, 3));
  Tensor4 d5 = apply(p.pool5_proj, avg_pool(x, 5, 5));
  Tensor4 d7 = apply(p.pool7_proj, avg_pool(x, 7, 7));
  Tensor4 d0 = apply(p.direct_proj, x);
  Tensor4 stack = channel_concat(channel_concat(d3, d5), channel_concat(d7, d0));
  return sigmoid(apply(p.fuse, stack));
}

ChsBlockParams make_chs_block(ParamStore& store, const std::string& prefix,
                              int64_t channels, int64_t reduction) {
  if (reduction < 1 || channels % reduction != 0) {
    throw ConfigError(str_cat("chs block '", prefix, "': reduction ", reduction,
                              " does not divide ", channels, " channels"));
  }
  ChsBlockParams p;
  p.squeeze = make_conv(store, prefix + ".squeeze", channels,
                        conv1x1(channels / reduction));
  p.expand = make_conv(store, prefix + ".expand", channels / reduction,
                       conv1x1(channels));
  return p;
}

Tensor4 chs_block(const Tensor4& x, const ChsBlockParams& p) {
  Tensor4 pooled = global_avg_pool(x);
  Tensor4 mid = relu(apply(p.squeeze, pooled));
  return relu(apply(p.expand, mid));
}

RecalModuleParams make_recal_module(ParamStore& store, const std::string& prefix,
                                    int64_t channels, int64_t reduction) {
  if (channels < 2) {
    throw ConfigError(str_cat("recal module '", prefix, "': needs at least 2 channels, got ",
                              channels));
  }
  RecalModuleParams p;
  p.channels = channels;
  p.res = make_res_block(store, prefix + ".res", channels);
  p.chs = make_chs_block(store, prefix + ".chs", channels, reduction);
  p.norm_region = make_norm_affine(store, prefix + ".norm_region", channels);
  p.norm_channel = make_norm_affine(store, prefix + ".norm_channel", channels);
  ConvSpec fuse;
  fuse.kh = 3;
  fuse.kw = 3;
  fuse.ph = 1;
  fuse.pw = 1;
  fuse.out_channels = channels;
  fuse.groups = channels;
  p.fuse = make_conv(store, prefix + ".fuse", 2 * channels, fuse);
  return p;
}

Tensor4 recal_module(const Tensor4& x, const RecalModuleParams& p) {
  Tensor4 region = res_block(x, p.res);    // (N,1,H,W)
  Tensor4 channel = chs_block(x, p.chs);   // (N,C,1,1)
  Tensor4 f_region =
      layer_norm(elementwise_mul(x, region), p.norm_region.scale, p.norm_region.shift);
  Tensor4 f_channel = layer_norm(elementwise_mul(x, channel), p.norm_channel.scale,
                                 p.norm_channel.shift);
  Tensor4 stacked = interleave_channels(f_channel, f_region);
  return apply(p.fuse, stacked);
}

SeBlockParams make_se_block(ParamStore& store, const std::string& prefix,
                            int64_t channels, int64_t reduction) {
  if (reduction < 1 || channels % reduction != 0) {
    throw ConfigError(str_cat("se block '", prefix, "': reduction ", reduction,
                              " does not divide ", channels, " channels"));
  }
  SeBlockParams p;
  p.squeeze = make_conv(store, prefix + ".squeeze", channels,
                        conv1x1(channels / reduction));
  p.expand = make_conv(store, prefix + ".expand", channels / reduction,
                       conv1x1(channels));
  return p;
}

Tensor4 se_block(const Tensor4& x, const SeBlockParams& p) {
  Tensor4 pooled = global_avg_pool(x);
  Tensor4 gate = sigmoid(apply(p.expand, relu(apply(p.squeeze, pooled))));
  return elementwise_mul(x, gate);
}

ScseBlockParams make_scse_block(ParamStore& store, const std::string& prefix,
                                int64_t channels, int64_t reduction) {
  ScseBlockParams p;
  p.se = make_se_block(store, prefix + ".se", channels, reduction);
  p.spatial = make_conv(store, prefix + ".spatial", channels, conv1x1(1));
  return p;
}

Tensor4 scse_block(const Tensor4& x, const ScseBlockParams& p) {
  Tensor4 channel_path = se_block(x, p.se);
  Tensor4 spatial_gate = sigmoid(apply(p.spatial, x));
  Tensor4 spatial_path = elementwise_mul(x, spatial_gate);
  return elementwise_max(channel_path, spatial_path);
}

}  // namespace recal
