#include "recal/model.hpp"

#include <algorithm>

#include "recal/rng.hpp"

namespace recal {

const char* to_string(Variant v) {
  switch (v) {
    case Variant::baseline: return "baseline";
    case Variant::recal: return "recal";
    case Variant::scse: return "scse";
    case Variant::se: return "se";
  }
  return "?";
}

Variant variant_from_string(std::string_view s) {
  if (s == "baseline") return Variant::baseline;
  if (s == "recal") return Variant::recal;
  if (s == "scse") return Variant::scse;
  if (s == "se") return Variant::se;
  throw ConfigError(str_cat("unknown variant '", s,
                            "' (expected baseline, recal, scse or se)"));
}

namespace {

constexpr std::array<int64_t, 5> kEncoderWidths{64, 128, 256, 512, 512};
constexpr std::array<int64_t, 5> kEncoderDepths{2, 2, 3, 3, 3};

int64_t parse_i64(std::string_view text, std::string_view what) {
  int64_t value = 0;
  bool any = false;
  bool neg = false;
  size_t i = 0;
  if (i < text.size() && (text[i] == '-' || text[i] == '+')) {
    neg = text[i] == '-';
    ++i;
  }
  for (; i < text.size(); ++i) {
    if (text[i] < '0' || text[i] > '9') {
      throw ConfigError(str_cat("bad integer '", text, "' for ", what));
    }
    value = value * 10 + (text[i] - '0');
    any = true;
  }
  if (!any) throw ConfigError(str_cat("bad integer '", text, "' for ", what));
  return neg ? -value : value;
}

}  // namespace

void ModelConfig::validate() const {
  if (width_scale < 1 || 32 % width_scale != 0) {
    throw ConfigError(str_cat("width_scale ", width_scale,
                              " must divide the narrowest stage width 32"));
  }
  if (in_channels < 1) {
    throw ConfigError(str_cat("in_channels must be >= 1, got ", in_channels));
  }
  if (out_channels < 1) {
    throw ConfigError(str_cat("out_channels must be >= 1, got ", out_channels));
  }
  if (input_h < 16 || input_w < 16 || input_h % 16 != 0 || input_w % 16 != 0) {
    throw ConfigError(str_cat("input size ", input_h, "x", input_w,
                              " must be divisible by 16"));
  }
  if (reduction < 1) {
    throw ConfigError(str_cat("reduction must be >= 1, got ", reduction));
  }
  const auto active = active_placements();
  const auto chans = placement_channels();
  for (size_t i = 0; i < active.size(); ++i) {
    if (active[i] && variant != Variant::baseline && chans[i] % reduction != 0) {
      throw ConfigError(str_cat("placement ", kPlacementNames[i], " width ", chans[i],
                                " is not divisible by reduction ", reduction,
                                " at width_scale ", width_scale));
    }
  }
}

std::string ModelConfig::canonical_string() const {
  std::string p;
  for (bool b : placements) p += b ? '1' : '0';
  return str_cat("variant=", to_string(variant), ";width_scale=", width_scale,
                 ";in_channels=", in_channels, ";out_channels=", out_channels,
                 ";input=", input_h, "x", input_w, ";placements=", p,
                 ";reduction=", reduction);
}

uint64_t ModelConfig::digest() const { return fnv1a64(canonical_string()); }

ModelConfig ModelConfig::from_canonical_string(std::string_view text) {
  ModelConfig cfg;
  size_t pos = 0;
  while (pos < text.size()) {
    size_t end = text.find(';', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view item = text.substr(pos, end - pos);
    pos = end + 1;
    if (item.empty()) continue;
    const size_t eq = item.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(str_cat("bad model config item '", item, "'"));
    }
    const std::string_view key = item.substr(0, eq);
    const std::string_view val = item.substr(eq + 1);
    if (key == "variant") {
      cfg.variant = variant_from_string(val);
    } else if (key == "width_scale") {
      cfg.width_scale = parse_i64(val, key);
    } else if (key == "in_channels") {
      cfg.in_channels = parse_i64(val, key);
    } else if (key == "out_channels") {
      cfg.out_channels = parse_i64(val, key);
    } else if (key == "input") {
      const size_t x = val.find('x');
      if (x == std::string_view::npos) {
        throw ConfigError(str_cat("bad input size '", val, "', expected HxW"));
      }
      cfg.input_h = parse_i64(val.substr(0, x), "input height");
      cfg.input_w = parse_i64(val.substr(x + 1), "input width");
    } else if (key == "placements") {
      if (val.size() != cfg.placements.size()) {
        throw ConfigError(str_cat("placements '", val, "' must have ",
                                  cfg.placements.size(), " digits"));
      }
      for (size_t i = 0; i < cfg.placements.size(); ++i) {
        if (val[i] != '0' && val[i] != '1') {
          throw ConfigError(str_cat("placements '", val, "' must be 0/1 digits"));
        }
        cfg.placements[i] = val[i] == '1';
      }
    } else if (key == "reduction") {
      cfg.reduction = parse_i64(val, key);
    } else {
      throw ConfigError(str_cat("unknown model config key '", key, "'"));
    }
  }
  cfg.validate();
  return cfg;
}

std::array<bool, 5> ModelConfig::active_placements() const {
  if (variant == Variant::baseline) return {false, false, false, false, false};
  return placements;
}

std::array<int64_t, 5> ModelConfig::placement_channels() const {
  return {512 / width_scale, 256 / width_scale, 128 / width_scale, 64 / width_scale,
          32 / width_scale};
}

namespace {

arch::ConvBn make_conv_bn(ParamStore& store, const std::string& prefix, int layer,
                          int64_t in_ch, int64_t out_ch) {
  arch::ConvBn cb;
  ConvSpec spec;
  spec.kh = 3;
  spec.kw = 3;
  spec.ph = 1;
  spec.pw = 1;
  spec.out_channels = out_ch;
  cb.conv = make_conv(store, str_cat(prefix, ".conv", layer), in_ch, spec);
  const std::string bn = str_cat(prefix, ".bn", layer);
  const Shape4 pshape{1, out_ch, 1, 1};
  cb.bn_scale = store.declare(bn + ".scale", ParamKind::norm_scale, pshape);
  cb.bn_shift = store.declare(bn + ".shift", ParamKind::norm_shift, pshape);
  cb.bn_rmean = store.declare(bn + ".running_mean", ParamKind::running_stat, pshape);
  cb.bn_rvar = store.declare(bn + ".running_var", ParamKind::running_stat, pshape);
  auto rv = cb.bn_rvar.values_mut();
  std::fill(rv.begin(), rv.end(), real(1));
  return cb;
}

Tensor4 apply_conv_bn(arch::ConvBn& cb, const Tensor4& x, bool training) {
  return relu(batch_norm(apply(cb.conv, x), cb.bn_scale, cb.bn_shift, cb.bn_rmean,
                         cb.bn_rvar, training));
}

int64_t formula_count(const ConvLayer& l) { return l.spec.weight_count(l.in_channels); }

int64_t recount_site(const arch::CalibSite& site) {
  int64_t total = 0;
  if (site.recal) {
    const auto& m = *site.recal;
    for (const ConvLayer* l : {&m.res.pool3_proj, &m.res.pool5_proj, &m.res.pool7_proj,
                               &m.res.direct_proj, &m.res.fuse, &m.chs.squeeze,
                               &m.chs.expand, &m.fuse}) {
      total += formula_count(*l);
    }
  }
  if (site.scse) {
    const auto& m = *site.scse;
    for (const ConvLayer* l : {&m.se.squeeze, &m.se.expand, &m.spatial}) {
      total += formula_count(*l);
    }
  }
  if (site.se) {
    const auto& m = *site.se;
    total += formula_count(m.squeeze) + formula_count(m.expand);
  }
  return total;
}

}  // namespace

SegNet::SegNet(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const int64_t ws = cfg_.width_scale;
  const auto active = cfg_.active_placements();
  const auto calib_channels = cfg_.placement_channels();

  auto build_site = [&](size_t site, int64_t channels) {
    if (!active[site]) return;
    const std::string prefix = str_cat("calib.", kPlacementNames[site]);
    switch (cfg_.variant) {
      case Variant::recal:
        calib_[site].recal =
            make_recal_module(store_, prefix, channels, cfg_.reduction);
        break;
      case Variant::scse:
        calib_[site].scse = make_scse_block(store_, prefix, channels, cfg_.reduction);
        break;
      case Variant::se:
        calib_[site].se = make_se_block(store_, prefix, channels, cfg_.reduction);
        break;
      case Variant::baseline:
        break;
    }
  };

  int64_t ch = cfg_.in_channels;
  for (size_t s = 0; s < kEncoderWidths.size(); ++s) {
    arch::EncoderStage stage;
    stage.out_channels = kEncoderWidths[s] / ws;
    for (int j = 0; j < kEncoderDepths[s]; ++j) {
      stage.layers.push_back(
          make_conv_bn(store_, str_cat("enc", s + 1), j + 1, ch, stage.out_channels));
      ch = stage.out_channels;
    }
    encoder_.push_back(std::move(stage));
  }

  build_site(0, calib_channels[0]);

  // Decoder stages run D4 down to D1; each halves the concatenated width
  // twice (cat -> cat/2 -> cat/4).
  for (size_t i = 0; i < 4; ++i) {
    const int64_t skip_ch = encoder_[3 - i].out_channels;
    const int64_t cat_ch = ch + skip_ch;
    arch::DecoderStage stage;
    stage.out_channels = cat_ch / 4;
    const std::string prefix = str_cat("dec", 4 - i);
    stage.conv1 = make_conv_bn(store_, prefix, 1, cat_ch, cat_ch / 2);
    stage.conv2 = make_conv_bn(store_, prefix, 2, cat_ch / 2, stage.out_channels);
    decoder_.push_back(std::move(stage));
    ch = stage.out_channels;
    build_site(i + 1, calib_channels[i + 1]);
  }

  ConvSpec head;
  head.kh = 1;
  head.kw = 1;
  head.out_channels = cfg_.out_channels;
  head_ = make_conv(store_, "head", ch, head);
}

void SegNet::init_params(uint64_t seed) { store_.init_kaiming(seed); }

Tensor4 SegNet::run_calibration(size_t site, const Tensor4& x) {
  const arch::CalibSite& c = calib_[site];
  if (c.recal) return recal_module(x, *c.recal);
  if (c.scse) return scse_block(x, *c.scse);
  if (c.se) return se_block(x, *c.se);
  return x;
}

Tensor4 SegNet::forward(const Tensor4& images, bool training) {
  return forward(images, training, nullptr);
}

Tensor4 SegNet::forward(const Tensor4& images, bool training,
                        std::vector<std::pair<std::string, Tensor4>>* taps) {
  const Shape4& in = images.shape();
  if (in.c != cfg_.in_channels) {
    throw ConfigError(str_cat("forward: expected ", cfg_.in_channels,
                              " input channels, got ", in.c));
  }
  if (in.h < 16 || in.w < 16 || in.h % 16 != 0 || in.w % 16 != 0) {
    throw ConfigError(str_cat("forward: input spatial size ", in.h, "x", in.w,
                              " must be divisible by 16"));
  }

  Tensor4 x = images;
  std::vector<Tensor4> skips;
  for (size_t s = 0; s < encoder_.size(); ++s) {
    for (auto& layer : encoder_[s].layers) x = apply_conv_bn(layer, x, training);
    if (s + 1 == encoder_.size()) {
      x = run_calibration(0, x);
      if (taps) taps->emplace_back("E5", x);
    } else {
      skips.push_back(x);
      if (taps) taps->emplace_back(str_cat("E", s + 1), x);
      x = max_pool2(x);
    }
  }

  for (size_t i = 0; i < decoder_.size(); ++i) {
    x = bilinear_upsample2(x);
    x = channel_concat(x, skips[3 - i]);
    x = apply_conv_bn(decoder_[i].conv1, x, training);
    x = apply_conv_bn(decoder_[i].conv2, x, training);
    x = run_calibration(i + 1, x);
    if (taps) taps->emplace_back(str_cat("D", 4 - i), x);
  }

  return sigmoid(apply(head_, x));
}

int64_t SegNet::placement_weight_count(size_t site) const {
  return store_.weight_census(str_cat("calib.", kPlacementNames.at(site), "."));
}

int64_t SegNet::placement_weight_recount(size_t site) const {
  return recount_site(calib_.at(site));
}

int64_t SegNet::total_weight_count() const { return store_.weight_census(); }

int64_t SegNet::total_weight_recount() const {
  int64_t total = 0;
  for (const auto& stage : encoder_) {
    for (const auto& layer : stage.layers) total += formula_count(layer.conv);
  }
  for (const auto& stage : decoder_) {
    total += formula_count(stage.conv1.conv) + formula_count(stage.conv2.conv);
  }
  for (const auto& site : calib_) total += recount_site(site);
  total += formula_count(head_);
  return total;
}

void SegNet::save(const std::string& path) const {
  save_checkpoint(path, store_, cfg_.digest(), cfg_.canonical_string());
}

void SegNet::load(const std::string& path) {
  load_checkpoint(path, store_, cfg_.digest());
}

}  // namespace recal
