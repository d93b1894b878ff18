#include "recal/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "recal/image_io.hpp"
#include "recal/rng.hpp"

namespace recal {

namespace fs = std::filesystem;

namespace {

constexpr real kPi = real(3.141592653589793238462643383279502884);

void require_range(const char* name, real lo, real hi) {
  if (!(lo > 0) || !(hi >= lo)) {
    throw ConfigError(str_cat("phantom spec: ", name, " range [", lo, ", ", hi,
                              "] must be positive and ordered"));
  }
}

bool known_class(const std::string& c) {
  return c == "pupil" || c == "iris" || c == "lens" || c == "instrument";
}

}  // namespace

void PhantomSpec::validate() const {
  if (height < 8 || width < 8) {
    throw ConfigError(str_cat("phantom spec: image size ", height, "x", width,
                              " is too small"));
  }
  if (!known_class(object_class)) {
    throw ConfigError(str_cat("phantom spec: unknown class '", object_class,
                              "' (expected pupil, iris, lens or instrument)"));
  }
  require_range("pupil radius", pupil_radius_lo, pupil_radius_hi);
  require_range("iris radius", iris_radius_lo, iris_radius_hi);
  require_range("lens major", lens_major_lo, lens_major_hi);
  require_range("lens ratio", lens_ratio_lo, lens_ratio_hi);
  require_range("instrument half-width", instrument_halfwidth_lo, instrument_halfwidth_hi);
  if (center_jitter < 0 || noise_sigma < 0 || blur_probability < 0 ||
      blur_probability > 1 || highlight_probability < 0 || highlight_probability > 1) {
    throw ConfigError("phantom spec: jitter/noise/probability fields out of range");
  }
  if (iris_radius_lo <= pupil_radius_hi) {
    throw ConfigError(str_cat("phantom spec: infeasible geometry, iris radius range [",
                              iris_radius_lo, ", ", iris_radius_hi,
                              "] must lie above the pupil range [", pupil_radius_lo,
                              ", ", pupil_radius_hi, "]"));
  }
  const real reach =
      center_jitter + std::max(iris_radius_hi, pupil_radius_hi * lens_major_hi);
  if (reach > real(0.5)) {
    throw ConfigError(str_cat("phantom spec: infeasible geometry, jitter plus outer "
                              "radius reaches ", reach,
                              " of the image but must stay within 0.5"));
  }
}

namespace {

struct Raster {
  int64_t h, w;
  real* img;   // 3 planes
  real* mask;  // 1 plane
};

void raster_sample(const PhantomSpec& spec, uint64_t sample_seed, const Raster& out,
                   PhantomGeometry* out_geom) {
  Rng rng(sample_seed);
  const int64_t h = out.h, w = out.w;
  const real m = static_cast<real>(std::min(h, w));

  PhantomGeometry g;
  g.cx = static_cast<real>(w) / 2 + rng.uniform(-1, 1) * spec.center_jitter * m;
  g.cy = static_cast<real>(h) / 2 + rng.uniform(-1, 1) * spec.center_jitter * m;
  g.pupil_r = rng.uniform(spec.pupil_radius_lo, spec.pupil_radius_hi) * m;
  g.iris_r = rng.uniform(spec.iris_radius_lo, spec.iris_radius_hi) * m;
  g.lens_a = g.pupil_r * rng.uniform(spec.lens_major_lo, spec.lens_major_hi);
  g.lens_b = g.lens_a * rng.uniform(spec.lens_ratio_lo, spec.lens_ratio_hi);
  g.lens_angle = rng.uniform(0, kPi);
  if (spec.object_class == "instrument") {
    g.has_bar = true;
    g.bar_cx = g.cx + rng.uniform(-1, 1) * real(0.15) * m;
    g.bar_cy = g.cy + rng.uniform(-1, 1) * real(0.15) * m;
    g.bar_angle = rng.uniform(0, kPi);
    g.bar_halfwidth =
        rng.uniform(spec.instrument_halfwidth_lo, spec.instrument_halfwidth_hi) * m;
  }

  const real iris_phase = rng.uniform(0, 2 * kPi);

  struct Highlight {
    real x, y, r;
  };
  std::vector<Highlight> highlights;
  if (rng.bernoulli(spec.highlight_probability)) {
    const int count = 1 + static_cast<int>(rng.uniform_index(2));
    for (int i = 0; i < count; ++i) {
      const real ang = rng.uniform(0, 2 * kPi);
      const real dist = rng.uniform(real(0.4), real(0.9)) * g.iris_r;
      highlights.push_back({g.cx + std::cos(ang) * dist, g.cy + std::sin(ang) * dist,
                            rng.uniform(real(0.02), real(0.04)) * m});
    }
  }
  const bool blurred = rng.bernoulli(spec.blur_probability);

  const real bar_nx = g.has_bar ? -std::sin(g.bar_angle) : 0;
  const real bar_ny = g.has_bar ? std::cos(g.bar_angle) : 0;
  const real lens_c = std::cos(g.lens_angle);
  const real lens_s = std::sin(g.lens_angle);
  const real dmax2 = (static_cast<real>(h) * h + static_cast<real>(w) * w) / 4;

  const int64_t hw = h * w;
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      const real px = static_cast<real>(x) + real(0.5);
      const real py = static_cast<real>(y) + real(0.5);
      const real dx = px - g.cx;
      const real dy = py - g.cy;
      const real d2 = dx * dx + dy * dy;

      real r, gr, b;
      const real vignette = 1 - real(0.18) * d2 / dmax2;
      r = real(0.80) * vignette;
      gr = real(0.70) * vignette;
      b = real(0.68) * vignette;
      if (d2 <= g.iris_r * g.iris_r && d2 > g.pupil_r * g.pupil_r) {
        const real tex =
            1 + real(0.12) * std::sin(6 * std::atan2(dy, dx) + iris_phase);
        r = real(0.36) * tex;
        gr = real(0.46) * tex;
        b = real(0.58) * tex;
      } else if (d2 <= g.pupil_r * g.pupil_r) {
        r = real(0.06);
        gr = real(0.06);
        b = real(0.08);
      }
      // Faint lens ellipse: the transparency challenge, a low-contrast lift.
      {
        const real u = lens_c * dx + lens_s * dy;
        const real v = -lens_s * dx + lens_c * dy;
        const real q = (u / g.lens_a) * (u / g.lens_a) + (v / g.lens_b) * (v / g.lens_b);
        if (q <= 1) {
          r += real(0.05);
          gr += real(0.05);
          b += real(0.06);
        }
      }
      bool in_bar = false;
      if (g.has_bar) {
        const real proj = (px - g.bar_cx) * bar_nx + (py - g.bar_cy) * bar_ny;
        in_bar = std::abs(proj) <= g.bar_halfwidth;
        if (in_bar) {
          r = real(0.86);
          gr = real(0.88);
          b = real(0.92);
        }
      }
      for (const auto& hl : highlights) {
        const real hx = px - hl.x;
        const real hy = py - hl.y;
        if (hx * hx + hy * hy <= hl.r * hl.r) {
          r = real(0.97);
          gr = real(0.97);
          b = real(0.96);
        }
      }

      const int64_t i = y * w + x;
      out.img[i] = r;
      out.img[hw + i] = gr;
      out.img[2 * hw + i] = b;

      bool in_mask = false;
      if (spec.object_class == "pupil") {
        in_mask = d2 <= g.pupil_r * g.pupil_r;
      } else if (spec.object_class == "iris") {
        in_mask = d2 <= g.iris_r * g.iris_r && d2 > g.pupil_r * g.pupil_r;
      } else if (spec.object_class == "lens") {
        const real u = lens_c * dx + lens_s * dy;
        const real v = -lens_s * dx + lens_c * dy;
        in_mask = (u / g.lens_a) * (u / g.lens_a) + (v / g.lens_b) * (v / g.lens_b) <= 1;
      } else {
        in_mask = in_bar;
      }
      out.mask[i] = in_mask ? real(1) : real(0);
    }
  }

  if (blurred) {
    // 3x3 box blur with edge clamp, blunting region boundaries.
    std::vector<real> tmp(static_cast<size_t>(hw));
    for (int c = 0; c < 3; ++c) {
      real* plane = out.img + c * hw;
      for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
          real acc = 0;
          for (int64_t ky = -1; ky <= 1; ++ky) {
            const int64_t sy = std::clamp<int64_t>(y + ky, 0, h - 1);
            for (int64_t kx = -1; kx <= 1; ++kx) {
              const int64_t sx = std::clamp<int64_t>(x + kx, 0, w - 1);
              acc += plane[sy * w + sx];
            }
          }
          tmp[static_cast<size_t>(y * w + x)] = acc / 9;
        }
      }
      std::copy(tmp.begin(), tmp.end(), plane);
    }
  }

  for (int64_t i = 0; i < 3 * hw; ++i) {
    const real noisy =
        out.img[i] + static_cast<real>(rng.normal()) * spec.noise_sigma;
    out.img[i] = std::clamp(noisy, real(0), real(1));
  }

  if (out_geom) *out_geom = g;
}

std::string pad_id(int64_t i) {
  std::string digits = std::to_string(i);
  while (digits.size() < 4) digits.insert(digits.begin(), '0');
  return digits;
}

}  // namespace

SampleBatch generate(const PhantomSpec& spec, int64_t count,
                     std::vector<PhantomGeometry>* geometries) {
  spec.validate();
  if (count < 1) throw ConfigError(str_cat("generate: count must be >= 1, got ", count));

  SampleBatch batch;
  batch.images = Tensor4::zeros({count, 3, spec.height, spec.width});
  batch.masks = Tensor4::zeros({count, 1, spec.height, spec.width});
  if (geometries) geometries->clear();

  const int64_t img_stride = 3 * spec.height * spec.width;
  const int64_t mask_stride = spec.height * spec.width;
  real* img = batch.images.values_mut().data();
  real* mask = batch.masks.values_mut().data();
  for (int64_t i = 0; i < count; ++i) {
    PhantomGeometry g;
    raster_sample(spec, mix_seed(spec.seed, static_cast<uint64_t>(i)),
                  {spec.height, spec.width, img + i * img_stride, mask + i * mask_stride},
                  geometries ? &g : nullptr);
    if (geometries) geometries->push_back(g);
    batch.ids.push_back(pad_id(i));
  }
  return batch;
}

const char* to_string(AugmentOp op) {
  switch (op) {
    case AugmentOp::motion_blur: return "motion_blur";
    case AugmentOp::median_blur: return "median_blur";
    case AugmentOp::brightness_contrast: return "brightness_contrast";
    case AugmentOp::shift: return "shift";
    case AugmentOp::scale: return "scale";
    case AugmentOp::rotate: return "rotate";
  }
  return "?";
}

AugmentOp augment_op_from_string(std::string_view name) {
  if (name == "motion_blur") return AugmentOp::motion_blur;
  if (name == "median_blur") return AugmentOp::median_blur;
  if (name == "brightness_contrast") return AugmentOp::brightness_contrast;
  if (name == "shift") return AugmentOp::shift;
  if (name == "scale") return AugmentOp::scale;
  if (name == "rotate") return AugmentOp::rotate;
  throw ConfigError(str_cat("unknown augmentation '", name, "'"));
}

namespace {

// Inverse-mapped rotate/scale/shift about the image center: image sampled
// bilinearly with edge clamp, mask by nearest neighbor with zero outside.
void resample_geometric(const real* img_in, const real* mask_in, int64_t h, int64_t w,
                        const AugmentParams& p, real* img_out, real* mask_out) {
  const real theta = p.rotate_deg * kPi / 180;
  const real ct = std::cos(theta);
  const real st = std::sin(theta);
  const real cx = static_cast<real>(w) / 2;
  const real cy = static_cast<real>(h) / 2;
  if (!(p.scale > 0)) {
    throw ConfigError(str_cat("augment: scale must be positive, got ", p.scale));
  }
  const real inv_s = 1 / p.scale;
  const int64_t hw = h * w;

  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      const real qx = static_cast<real>(x) + real(0.5) - cx - p.shift_x;
      const real qy = static_cast<real>(y) + real(0.5) - cy - p.shift_y;
      const real sx = cx + (ct * qx + st * qy) * inv_s;
      const real sy = cy + (-st * qx + ct * qy) * inv_s;

      const int64_t nx = static_cast<int64_t>(std::floor(sx));
      const int64_t ny = static_cast<int64_t>(std::floor(sy));
      mask_out[y * w + x] = (nx >= 0 && nx < w && ny >= 0 && ny < h)
                                ? mask_in[ny * w + nx]
                                : real(0);

      const real u = sx - real(0.5);
      const real v = sy - real(0.5);
      int64_t x0 = static_cast<int64_t>(std::floor(u));
      int64_t y0 = static_cast<int64_t>(std::floor(v));
      const real fx = u - static_cast<real>(x0);
      const real fy = v - static_cast<real>(y0);
      const int64_t x0c = std::clamp<int64_t>(x0, 0, w - 1);
      const int64_t x1c = std::clamp<int64_t>(x0 + 1, 0, w - 1);
      const int64_t y0c = std::clamp<int64_t>(y0, 0, h - 1);
      const int64_t y1c = std::clamp<int64_t>(y0 + 1, 0, h - 1);
      for (int c = 0; c < 3; ++c) {
        const real* plane = img_in + c * hw;
        const real top = (1 - fx) * plane[y0c * w + x0c] + fx * plane[y0c * w + x1c];
        const real bot = (1 - fx) * plane[y1c * w + x0c] + fx * plane[y1c * w + x1c];
        img_out[c * hw + y * w + x] = (1 - fy) * top + fy * bot;
      }
    }
  }
}

void motion_blur_image(real* img, int64_t h, int64_t w, int64_t len, real angle_deg) {
  if (len < 3 || len % 2 == 0) {
    throw ConfigError(str_cat("augment: motion blur length must be odd >= 3, got ", len));
  }
  const real ang = angle_deg * kPi / 180;
  const real dx = std::cos(ang);
  const real dy = std::sin(ang);
  std::vector<std::pair<int64_t, int64_t>> offsets;
  for (int64_t k = -(len - 1) / 2; k <= (len - 1) / 2; ++k) {
    offsets.emplace_back(std::llround(static_cast<double>(k) * dx),
                         std::llround(static_cast<double>(k) * dy));
  }
  const int64_t hw = h * w;
  std::vector<real> tmp(static_cast<size_t>(hw));
  for (int c = 0; c < 3; ++c) {
    real* plane = img + c * hw;
    for (int64_t y = 0; y < h; ++y) {
      for (int64_t x = 0; x < w; ++x) {
        real acc = 0;
        for (const auto& [ox, oy] : offsets) {
          const int64_t sx = std::clamp<int64_t>(x + ox, 0, w - 1);
          const int64_t sy = std::clamp<int64_t>(y + oy, 0, h - 1);
          acc += plane[sy * w + sx];
        }
        tmp[static_cast<size_t>(y * w + x)] = acc / static_cast<real>(len);
      }
    }
    std::copy(tmp.begin(), tmp.end(), plane);
  }
}

void median_blur_image(real* img, int64_t h, int64_t w, int64_t k) {
  if (k < 3 || k % 2 == 0) {
    throw ConfigError(str_cat("augment: median kernel must be odd >= 3, got ", k));
  }
  const int64_t r = k / 2;
  const int64_t hw = h * w;
  std::vector<real> tmp(static_cast<size_t>(hw));
  std::vector<real> window;
  window.reserve(static_cast<size_t>(k * k));
  for (int c = 0; c < 3; ++c) {
    real* plane = img + c * hw;
    for (int64_t y = 0; y < h; ++y) {
      for (int64_t x = 0; x < w; ++x) {
        window.clear();
        for (int64_t ky = -r; ky <= r; ++ky) {
          const int64_t sy = std::clamp<int64_t>(y + ky, 0, h - 1);
          for (int64_t kx = -r; kx <= r; ++kx) {
            const int64_t sx = std::clamp<int64_t>(x + kx, 0, w - 1);
            window.push_back(plane[sy * w + sx]);
          }
        }
        auto mid = window.begin() + static_cast<int64_t>(window.size()) / 2;
        std::nth_element(window.begin(), mid, window.end());
        tmp[static_cast<size_t>(y * w + x)] = *mid;
      }
    }
    std::copy(tmp.begin(), tmp.end(), plane);
  }
}

void augment_one(const real* img_in, const real* mask_in, int64_t h, int64_t w,
                 const AugmentParams& p, real* img_out, real* mask_out) {
  resample_geometric(img_in, mask_in, h, w, p, img_out, mask_out);
  if (p.motion_blur_len > 0) {
    motion_blur_image(img_out, h, w, p.motion_blur_len, p.motion_blur_deg);
  }
  if (p.median_kernel > 0) {
    median_blur_image(img_out, h, w, p.median_kernel);
  }
  if (p.brightness != 0 || p.contrast != 1) {
    const int64_t n = 3 * h * w;
    for (int64_t i = 0; i < n; ++i) {
      const real v = (img_out[i] - real(0.5)) * p.contrast + real(0.5) + p.brightness;
      img_out[i] = std::clamp(v, real(0), real(1));
    }
  }
}

}  // namespace

SampleBatch apply_augment(const SampleBatch& batch, const AugmentParams& p) {
  const Shape4& is = batch.images.shape();
  SampleBatch out;
  out.images = Tensor4::zeros(is);
  out.masks = Tensor4::zeros(batch.masks.shape());
  out.ids = batch.ids;
  const int64_t img_stride = 3 * is.h * is.w;
  const int64_t mask_stride = is.h * is.w;
  const real* img_in = batch.images.values().data();
  const real* mask_in = batch.masks.values().data();
  real* img_out = out.images.values_mut().data();
  real* mask_out = out.masks.values_mut().data();
  for (int64_t i = 0; i < is.n; ++i) {
    augment_one(img_in + i * img_stride, mask_in + i * mask_stride, is.h, is.w, p,
                img_out + i * img_stride, mask_out + i * mask_stride);
  }
  return out;
}

SampleBatch augment(const SampleBatch& batch, std::span<const AugmentOp> ops,
                    uint64_t seed) {
  if (ops.empty()) throw UsageError("augment: op list is empty");
  const Shape4& is = batch.images.shape();
  SampleBatch out;
  out.images = Tensor4::zeros(is);
  out.masks = Tensor4::zeros(batch.masks.shape());
  out.ids = batch.ids;
  const int64_t img_stride = 3 * is.h * is.w;
  const int64_t mask_stride = is.h * is.w;
  const real* img_in = batch.images.values().data();
  const real* mask_in = batch.masks.values().data();
  real* img_out = out.images.values_mut().data();
  real* mask_out = out.masks.values_mut().data();
  for (int64_t i = 0; i < is.n; ++i) {
    Rng rng(mix_seed(seed, static_cast<uint64_t>(i)));
    AugmentParams p;
    for (AugmentOp op : ops) {
      switch (op) {
        case AugmentOp::rotate:
          p.rotate_deg = rng.uniform(-15, 15);
          break;
        case AugmentOp::shift:
          p.shift_x = rng.uniform(-real(0.1), real(0.1)) * static_cast<real>(is.w);
          p.shift_y = rng.uniform(-real(0.1), real(0.1)) * static_cast<real>(is.h);
          break;
        case AugmentOp::scale:
          p.scale = rng.uniform(real(0.9), real(1.1));
          break;
        case AugmentOp::brightness_contrast:
          p.brightness = rng.uniform(-real(0.15), real(0.15));
          p.contrast = rng.uniform(real(0.85), real(1.2));
          break;
        case AugmentOp::motion_blur:
          p.motion_blur_len = 3 + 2 * static_cast<int64_t>(rng.uniform_index(3));
          p.motion_blur_deg = rng.uniform(0, 180);
          break;
        case AugmentOp::median_blur:
          p.median_kernel = 3;
          break;
      }
    }
    augment_one(img_in + i * img_stride, mask_in + i * mask_stride, is.h, is.w, p,
                img_out + i * img_stride, mask_out + i * mask_stride);
  }
  return out;
}

namespace {

ImageU8 image_from_sample(const Tensor4& images, int64_t index) {
  const Shape4& s = images.shape();
  ImageU8 img;
  img.height = s.h;
  img.width = s.w;
  img.channels = 3;
  img.pixels.resize(static_cast<size_t>(s.h * s.w * 3));
  const real* v = images.values().data() + index * 3 * s.h * s.w;
  const int64_t hw = s.h * s.w;
  for (int64_t y = 0; y < s.h; ++y) {
    for (int64_t x = 0; x < s.w; ++x) {
      for (int64_t c = 0; c < 3; ++c) {
        const real val = std::clamp(v[c * hw + y * s.w + x], real(0), real(1));
        img.at(y, x, c) = static_cast<uint8_t>(std::lround(val * 255));
      }
    }
  }
  return img;
}

ImageU8 mask_from_sample(const Tensor4& masks, int64_t index) {
  const Shape4& s = masks.shape();
  ImageU8 img;
  img.height = s.h;
  img.width = s.w;
  img.channels = 1;
  img.pixels.resize(static_cast<size_t>(s.h * s.w));
  const real* v = masks.values().data() + index * s.h * s.w;
  for (int64_t i = 0; i < s.h * s.w; ++i) {
    img.pixels[static_cast<size_t>(i)] = v[i] >= real(0.5) ? 255 : 0;
  }
  return img;
}

}  // namespace

void write_sample(const std::string& dir, const std::string& id,
                  const SampleBatch& batch, int64_t index) {
  if (index < 0 || index >= batch.count()) {
    throw UsageError(str_cat("write_sample: index ", index, " out of range for batch of ",
                             batch.count()));
  }
  fs::create_directories(dir);
  write_png(str_cat(dir, "/", id, "_img.png"), image_from_sample(batch.images, index));
  write_png(str_cat(dir, "/", id, "_mask.png"), mask_from_sample(batch.masks, index));
}

SampleBatch read_sample(const std::string& dir, const std::string& id) {
  const std::string img_path = str_cat(dir, "/", id, "_img.png");
  const std::string mask_path = str_cat(dir, "/", id, "_mask.png");
  const ImageU8 img = read_png(img_path);
  const ImageU8 mask = read_png(mask_path);
  if (img.channels != 3) {
    throw IoError(str_cat("sample '", img_path, "': expected an RGB image"));
  }
  if (mask.channels != 1) {
    throw IoError(str_cat("sample '", mask_path, "': expected a grayscale mask"));
  }
  if (mask.height != img.height || mask.width != img.width) {
    throw IoError(str_cat("sample '", id, "': mask ", mask.height, "x", mask.width,
                          " does not match image ", img.height, "x", img.width));
  }

  SampleBatch batch;
  batch.images = Tensor4::zeros({1, 3, img.height, img.width});
  batch.masks = Tensor4::zeros({1, 1, img.height, img.width});
  batch.ids.push_back(id);
  real* iv = batch.images.values_mut().data();
  const int64_t hw = img.height * img.width;
  for (int64_t y = 0; y < img.height; ++y) {
    for (int64_t x = 0; x < img.width; ++x) {
      for (int64_t c = 0; c < 3; ++c) {
        iv[c * hw + y * img.width + x] =
            static_cast<real>(img.at(y, x, c)) / real(255);
      }
    }
  }
  real* mv = batch.masks.values_mut().data();
  for (int64_t i = 0; i < hw; ++i) {
    const uint8_t v = mask.pixels[static_cast<size_t>(i)];
    if (v != 0 && v != 255) {
      throw IoError(str_cat("sample '", mask_path, "': mask value ", int(v),
                            " at flat index ", i, " is not in {0,255}"));
    }
    mv[i] = v == 255 ? real(1) : real(0);
  }
  return batch;
}

void write_manifest(const std::string& root, const std::vector<ManifestEntry>& entries) {
  fs::create_directories(root);
  const std::string path = str_cat(root, "/manifest.csv");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(str_cat("manifest '", path, "': cannot open for writing"));
  out << "id,class,split,seed\n";
  for (const auto& e : entries) {
    out << e.id << ',' << e.object_class << ',' << e.split << ',' << e.seed << '\n';
  }
  if (!out) throw IoError(str_cat("manifest '", path, "': write failed"));
}

std::vector<ManifestEntry> read_manifest(const std::string& root) {
  const std::string path = str_cat(root, "/manifest.csv");
  std::ifstream in(path);
  if (!in) throw IoError(str_cat("manifest '", path, "': cannot open for reading"));
  std::string line;
  if (!std::getline(in, line) || line != "id,class,split,seed") {
    throw IoError(str_cat("manifest '", path, "': bad header '", line, "'"));
  }
  std::vector<ManifestEntry> entries;
  int64_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    ManifestEntry e;
    size_t pos = 0;
    auto next = [&](const char* what) {
      const size_t comma = line.find(',', pos);
      if (comma == std::string::npos) {
        throw IoError(str_cat("manifest '", path, "' line ", lineno, ": missing ", what));
      }
      std::string field = line.substr(pos, comma - pos);
      pos = comma + 1;
      return field;
    };
    e.id = next("class column");
    e.object_class = next("split column");
    e.split = next("seed column");
    try {
      e.seed = std::stoull(line.substr(pos));
    } catch (const std::exception&) {
      throw IoError(str_cat("manifest '", path, "' line ", lineno, ": bad seed '",
                            line.substr(pos), "'"));
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

std::vector<ManifestEntry> write_split(const std::string& root,
                                       const std::string& object_class,
                                       const std::string& split,
                                       const SampleBatch& batch, uint64_t seed) {
  const std::string dir = str_cat(root, "/", object_class, "/", split);
  std::vector<ManifestEntry> entries;
  for (int64_t i = 0; i < batch.count(); ++i) {
    write_sample(dir, batch.ids[static_cast<size_t>(i)], batch, i);
    entries.push_back({batch.ids[static_cast<size_t>(i)], object_class, split, seed});
  }
  return entries;
}

SampleBatch read_split(const std::string& root, const std::string& object_class,
                       const std::string& split) {
  const std::string dir = str_cat(root, "/", object_class, "/", split);
  std::vector<std::string> ids;
  for (const auto& e : read_manifest(root)) {
    if (e.object_class == object_class && e.split == split) ids.push_back(e.id);
  }
  if (ids.empty()) {
    throw IoError(str_cat("dataset '", root, "': no samples for class '", object_class,
                          "' split '", split, "'"));
  }
  std::vector<SampleBatch> singles;
  singles.reserve(ids.size());
  for (const auto& id : ids) singles.push_back(read_sample(dir, id));

  const Shape4 one = singles.front().images.shape();
  SampleBatch batch;
  batch.images = Tensor4::zeros({static_cast<int64_t>(ids.size()), 3, one.h, one.w});
  batch.masks = Tensor4::zeros({static_cast<int64_t>(ids.size()), 1, one.h, one.w});
  batch.ids = ids;
  real* iv = batch.images.values_mut().data();
  real* mv = batch.masks.values_mut().data();
  const int64_t img_stride = 3 * one.h * one.w;
  const int64_t mask_stride = one.h * one.w;
  for (size_t i = 0; i < singles.size(); ++i) {
    const auto& s = singles[i];
    if (!(s.images.shape() == one)) {
      throw IoError(str_cat("dataset '", root, "': sample '", ids[i], "' has shape ",
                            to_string(s.images.shape()), " but expected ",
                            to_string(one)));
    }
    std::copy_n(s.images.values().data(), img_stride,
                iv + static_cast<int64_t>(i) * img_stride);
    std::copy_n(s.masks.values().data(), mask_stride,
                mv + static_cast<int64_t>(i) * mask_stride);
  }
  return batch;
}

}  // namespace recal
