#pragma once

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "recal/blocks.hpp"

namespace recal {

enum class Variant { baseline, recal, scse, se };

const char* to_string(Variant v);
Variant variant_from_string(std::string_view s);

/// Static shape of the network. `width_scale` divides every channel width so
/// the same topology runs at paper scale (1) or desk scale (8). The five
/// calibration placements sit after the bottleneck stage and after each
/// decoder stage, at channel widths (512,256,128,64,32)/width_scale.
struct ModelConfig {
  Variant variant = Variant::recal;
  int64_t width_scale = 1;
  int64_t in_channels = 3;
  int64_t out_channels = 1;
  int64_t input_h = 64;
  int64_t input_w = 64;
  std::array<bool, 5> placements{true, true, true, true, true};
  int64_t reduction = 2;

  void validate() const;
  /// Key=value form used for digests and checkpoint headers.
  std::string canonical_string() const;
  uint64_t digest() const;
  static ModelConfig from_canonical_string(std::string_view text);

  /// Placements actually built: the baseline variant strips all of them.
  std::array<bool, 5> active_placements() const;
  /// Channel width at each placement site.
  std::array<int64_t, 5> placement_channels() const;
};

/// Stage names in placement order.
inline constexpr std::array<const char*, 5> kPlacementNames{"e5", "d4", "d3", "d2", "d1"};

namespace arch {

struct ConvBn {
  ConvLayer conv;
  Tensor4 bn_scale;
  Tensor4 bn_shift;
  Tensor4 bn_rmean;
  Tensor4 bn_rvar;
};

struct EncoderStage {
  std::vector<ConvBn> layers;
  int64_t out_channels = 0;
};

struct DecoderStage {
  ConvBn conv1;
  ConvBn conv2;
  int64_t out_channels = 0;
};

/// One calibration site; at most one of the optionals is engaged.
struct CalibSite {
  std::optional<RecalModuleParams> recal;
  std::optional<ScseBlockParams> scse;
  std::optional<SeBlockParams> se;

  bool engaged() const { return recal || scse || se; }
};

}  // namespace arch

/// Encoder-decoder segmentation network: VGG16-style encoder (stages of
/// 2,2,3,3,3 conv+BN+ReLU layers, 2x2 max pooling between them), U-Net-style
/// decoder (bilinear 2x upsampling, skip concatenation, two conv+BN+ReLU
/// layers per stage), calibration blocks per config, and a 1x1 sigmoid head.
class SegNet {
 public:
  explicit SegNet(const ModelConfig& cfg);

  /// Deterministic weight initialization (see ParamStore::init_kaiming).
  void init_params(uint64_t seed);

  /// `training` selects batch-norm batch statistics (and updates the running
  /// buffers); eval mode consumes the running buffers. Input must be
  /// (N, in_channels, H, W) with H and W divisible by 16.
  Tensor4 forward(const Tensor4& images, bool training);

  /// Like forward but also exposes the per-stage feature maps, named
  /// E1..E5 and D4..D1, each taken after any calibration block at that site.
  Tensor4 forward(const Tensor4& images, bool training,
                  std::vector<std::pair<std::string, Tensor4>>* taps);

  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  const ModelConfig& config() const { return cfg_; }

  /// Registered conv-weight count under the placement's slot prefix.
  int64_t placement_weight_count(size_t site) const;
  /// The same count recomputed from ConvSpec arithmetic, bypassing the store.
  int64_t placement_weight_recount(size_t site) const;
  int64_t total_weight_count() const;
  int64_t total_weight_recount() const;

  void save(const std::string& path) const;
  void load(const std::string& path);

 private:
  Tensor4 run_calibration(size_t site, const Tensor4& x);

  ModelConfig cfg_;
  ParamStore store_;
  std::vector<arch::EncoderStage> encoder_;
  std::vector<arch::DecoderStage> decoder_;
  std::array<arch::CalibSite, 5> calib_;
  ConvLayer head_;
};

}  // namespace recal
