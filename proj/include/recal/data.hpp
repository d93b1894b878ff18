#pragma once

#include <span>
#include <string>
#include <vector>

#include "recal/tensor.hpp"

namespace recal {

/// Geometry actually drawn for one sample, in pixel units with pixel-center
/// coordinates, exposed so tests can recount mask areas independently.
struct PhantomGeometry {
  real cx = 0, cy = 0;
  real pupil_r = 0;
  real iris_r = 0;
  real lens_a = 0, lens_b = 0;
  real lens_angle = 0;
  bool has_bar = false;
  real bar_cx = 0, bar_cy = 0, bar_angle = 0, bar_halfwidth = 0;
};

/// Eye-phantom generator settings. Lengths are fractions of min(height,
/// width) unless noted. The iris mask is the disk minus the pupil disk, so
/// the two classes are disjoint by construction.
struct PhantomSpec {
  int64_t height = 64;
  int64_t width = 64;
  std::string object_class = "pupil";  // pupil | iris | lens | instrument

  real center_jitter = 0.08;
  real pupil_radius_lo = 0.10;
  real pupil_radius_hi = 0.18;
  real iris_radius_lo = 0.28;
  real iris_radius_hi = 0.40;
  real lens_major_lo = 1.10;  // times the pupil radius
  real lens_major_hi = 1.40;
  real lens_ratio_lo = 0.55;  // minor/major
  real lens_ratio_hi = 0.85;
  real instrument_halfwidth_lo = 0.03;
  real instrument_halfwidth_hi = 0.07;

  real noise_sigma = 0.02;
  real blur_probability = 0.35;
  real highlight_probability = 0.5;
  uint64_t seed = 1;

  void validate() const;
};

struct SampleBatch {
  Tensor4 images;  // (N,3,H,W) in [0,1]
  Tensor4 masks;   // (N,1,H,W) in {0,1}
  std::vector<std::string> ids;

  int64_t count() const { return images.defined() ? images.shape().n : 0; }
};

/// Deterministic per (spec.seed, sample index): concentric noisy eye layers
/// (sclera, iris annulus, pupil disk, faint lens ellipse), a bright bar for
/// the instrument class, optional blur and specular highlights. The mask is
/// the named class region, rasterized at pixel centers.
SampleBatch generate(const PhantomSpec& spec, int64_t count,
                     std::vector<PhantomGeometry>* geometries = nullptr);

enum class AugmentOp { motion_blur, median_blur, brightness_contrast, shift, scale, rotate };

const char* to_string(AugmentOp op);
AugmentOp augment_op_from_string(std::string_view name);

/// One concrete transform. Geometric fields move image and mask together
/// (bilinear vs. nearest-neighbor resampling, so masks stay binary);
/// photometric fields touch the image only. Defaults are the identity.
struct AugmentParams {
  real rotate_deg = 0;
  real shift_x = 0;  // pixels
  real shift_y = 0;
  real scale = 1;
  real brightness = 0;
  real contrast = 1;
  int64_t motion_blur_len = 0;  // 0 disables; otherwise odd
  real motion_blur_deg = 0;
  int64_t median_kernel = 0;  // 0 disables; otherwise odd >= 3
};

/// Applies one parameter set to every sample.
SampleBatch apply_augment(const SampleBatch& batch, const AugmentParams& p);

/// Draws per-sample parameters for the selected ops and applies them.
/// Deterministic per (batch, ops, seed).
SampleBatch augment(const SampleBatch& batch, std::span<const AugmentOp> ops,
                    uint64_t seed);

// On-disk layout: <root>/<class>/<split>/<id>_img.png + <id>_mask.png,
// indexed by a manifest.csv at the root with columns id,class,split,seed.

struct ManifestEntry {
  std::string id;
  std::string object_class;
  std::string split;
  uint64_t seed = 0;
};

void write_sample(const std::string& dir, const std::string& id,
                  const SampleBatch& batch, int64_t index);
SampleBatch read_sample(const std::string& dir, const std::string& id);

void write_manifest(const std::string& root, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::string& root);

/// Writes every sample of the batch under <root>/<class>/<split>/ and
/// returns the manifest rows describing them.
std::vector<ManifestEntry> write_split(const std::string& root,
                                       const std::string& object_class,
                                       const std::string& split,
                                       const SampleBatch& batch, uint64_t seed);

/// Loads the samples the manifest lists for one class and split, in manifest
/// order.
SampleBatch read_split(const std::string& root, const std::string& object_class,
                       const std::string& split);

}  // namespace recal
