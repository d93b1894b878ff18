#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "recal/data.hpp"
#include "recal/image_io.hpp"

using namespace recal;
namespace fs = std::filesystem;

namespace {

PhantomSpec small_spec(const std::string& cls, uint64_t seed) {
  PhantomSpec spec;
  spec.height = 32;
  spec.width = 32;
  spec.object_class = cls;
  spec.seed = seed;
  return spec;
}

bool same_values(const Tensor4& a, const Tensor4& b) {
  if (!(a.shape() == b.shape())) return false;
  const auto av = a.values();
  const auto bv = b.values();
  for (int64_t i = 0; i < a.numel(); ++i) {
    if (av[i] != bv[i]) return false;
  }
  return true;
}

std::string scratch_dir(const char* leaf) {
  const std::string dir = (fs::temp_directory_path() / leaf).string();
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("spec validation") {
  CHECK_NOTHROW(PhantomSpec{}.validate());

  PhantomSpec spec;
  spec.height = 4;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = PhantomSpec{};
  spec.object_class = "retina";
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = PhantomSpec{};
  spec.pupil_radius_hi = spec.pupil_radius_lo / 2;  // unordered range
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = PhantomSpec{};
  spec.iris_radius_lo = spec.pupil_radius_hi;  // annulus would vanish
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = PhantomSpec{};
  spec.center_jitter = real(0.2);  // 0.2 + 0.40 outer radius spills over 0.5
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = PhantomSpec{};
  spec.noise_sigma = -1;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = PhantomSpec{};
  spec.blur_probability = 2;
  CHECK_THROWS_AS(spec.validate(), ConfigError);

  CHECK_THROWS_AS(generate(small_spec("pupil", 1), 0), ConfigError);
}

TEST_CASE("generation is deterministic per seed") {
  SampleBatch a = generate(small_spec("pupil", 9), 4);
  SampleBatch b = generate(small_spec("pupil", 9), 4);
  CHECK(same_values(a.images, b.images));
  CHECK(same_values(a.masks, b.masks));
  CHECK(a.ids == std::vector<std::string>{"0000", "0001", "0002", "0003"});

  SampleBatch c = generate(small_spec("pupil", 10), 4);
  CHECK_FALSE(same_values(a.images, c.images));

  // The per-sample streams are independent of the batch they sit in: sample
  // 2 of a long run equals sample 2 of a short one.
  SampleBatch d = generate(small_spec("pupil", 9), 3);
  const int64_t plane = 3 * 32 * 32;
  for (int64_t i = 0; i < plane; ++i) {
    CHECK(a.images.values()[2 * plane + i] == d.images.values()[2 * plane + i]);
  }
}

TEST_CASE("image range and mask binarity") {
  for (const char* cls : {"pupil", "iris", "lens", "instrument"}) {
    SampleBatch batch = generate(small_spec(cls, 3), 3);
    for (real v : batch.images.values()) {
      CHECK(v >= 0);
      CHECK(v <= 1);
    }
    for (real v : batch.masks.values()) CHECK((v == 0 || v == 1));
  }
}

TEST_CASE("masks match the reported geometry") {
  std::vector<PhantomGeometry> gs;
  SampleBatch pupil = generate(small_spec("pupil", 14), 3, &gs);
  SampleBatch iris = generate(small_spec("iris", 14), 3);

  const int64_t h = 32, w = 32;
  for (int64_t s = 0; s < 3; ++s) {
    const PhantomGeometry& g = gs[static_cast<size_t>(s)];
    CHECK(g.pupil_r > 0);
    CHECK(g.iris_r > g.pupil_r);
    const real* pm = pupil.masks.values().data() + s * h * w;
    const real* im = iris.masks.values().data() + s * h * w;
    int64_t pupil_area = 0;
    for (int64_t y = 0; y < h; ++y) {
      for (int64_t x = 0; x < w; ++x) {
        const real dx = static_cast<real>(x) + real(0.5) - g.cx;
        const real dy = static_cast<real>(y) + real(0.5) - g.cy;
        const real d2 = dx * dx + dy * dy;
        const bool in_pupil = d2 <= g.pupil_r * g.pupil_r;
        const bool in_iris = d2 <= g.iris_r * g.iris_r && !in_pupil;
        CHECK(pm[y * w + x] == (in_pupil ? 1 : 0));
        CHECK(im[y * w + x] == (in_iris ? 1 : 0));
        CHECK(pm[y * w + x] * im[y * w + x] == 0);  // disjoint classes
        pupil_area += in_pupil;
      }
    }
    CHECK(pupil_area > 0);
  }
}

TEST_CASE("identity augmentation is exact") {
  SampleBatch batch = generate(small_spec("pupil", 5), 2);
  SampleBatch out = apply_augment(batch, AugmentParams{});
  CHECK(same_values(out.images, batch.images));
  CHECK(same_values(out.masks, batch.masks));
  CHECK(out.ids == batch.ids);
}

TEST_CASE("photometric ops leave the mask alone") {
  SampleBatch batch = generate(small_spec("iris", 6), 2);
  AugmentParams p;
  p.brightness = real(0.1);
  p.contrast = real(1.1);
  SampleBatch out = apply_augment(batch, p);
  CHECK(same_values(out.masks, batch.masks));
  CHECK_FALSE(same_values(out.images, batch.images));
  for (real v : out.images.values()) {
    CHECK(v >= 0);
    CHECK(v <= 1);
  }

  p = AugmentParams{};
  p.motion_blur_len = 3;
  p.motion_blur_deg = 30;
  out = apply_augment(batch, p);
  CHECK(same_values(out.masks, batch.masks));

  p = AugmentParams{};
  p.median_kernel = 3;
  out = apply_augment(batch, p);
  CHECK(same_values(out.masks, batch.masks));
}

TEST_CASE("quarter-turn rotation preserves mask area") {
  PhantomSpec spec = small_spec("pupil", 8);
  spec.height = 64;
  spec.width = 64;
  SampleBatch batch = generate(spec, 2);
  for (real deg : {real(90), real(-90)}) {
    AugmentParams p;
    p.rotate_deg = deg;
    SampleBatch out = apply_augment(batch, p);
    real before = 0, after = 0;
    for (real v : batch.masks.values()) before += v;
    for (real v : out.masks.values()) after += v;
    CHECK(before == after);  // the grid maps onto itself
    CHECK(before > 0);
  }
}

TEST_CASE("integer shift moves content exactly") {
  SampleBatch batch = generate(small_spec("pupil", 12), 1);
  AugmentParams p;
  p.shift_x = 3;
  p.shift_y = -2;
  SampleBatch out = apply_augment(batch, p);

  const int64_t h = 32, w = 32, hw = h * w;
  const real* mi = batch.masks.values().data();
  const real* mo = out.masks.values().data();
  const real* ii = batch.images.values().data();
  const real* io = out.images.values().data();
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      const int64_t sy = y + 2;
      const int64_t sx = x - 3;
      const bool inside = sx >= 0 && sx < w && sy >= 0 && sy < h;
      CHECK(mo[y * w + x] == (inside ? mi[sy * w + sx] : 0));
      if (inside) {
        for (int64_t c = 0; c < 3; ++c) {
          CHECK(io[c * hw + y * w + x] == ii[c * hw + sy * w + sx]);
        }
      }
    }
  }
}

TEST_CASE("augmentation parameter validation") {
  SampleBatch batch = generate(small_spec("pupil", 2), 1);
  AugmentParams p;
  p.scale = 0;
  CHECK_THROWS_AS(apply_augment(batch, p), ConfigError);
  p = AugmentParams{};
  p.motion_blur_len = 4;
  CHECK_THROWS_AS(apply_augment(batch, p), ConfigError);
  p = AugmentParams{};
  p.median_kernel = 2;
  CHECK_THROWS_AS(apply_augment(batch, p), ConfigError);
}

TEST_CASE("randomized augmentation draws per-sample parameters") {
  SampleBatch batch = generate(small_spec("pupil", 4), 3);
  const AugmentOp ops[] = {AugmentOp::rotate, AugmentOp::shift};
  SampleBatch a = augment(batch, ops, 5);
  SampleBatch b = augment(batch, ops, 5);
  CHECK(same_values(a.images, b.images));
  CHECK(same_values(a.masks, b.masks));
  SampleBatch c = augment(batch, ops, 6);
  CHECK_FALSE(same_values(a.images, c.images));

  // Two identical inputs must receive different transforms.
  const int64_t plane = 3 * 32 * 32;
  std::vector<real> twice(batch.images.values().begin(),
                          batch.images.values().begin() + plane);
  twice.insert(twice.end(), twice.begin(), twice.end());
  std::vector<real> twice_m(batch.masks.values().begin(),
                            batch.masks.values().begin() + 32 * 32);
  twice_m.insert(twice_m.end(), twice_m.begin(), twice_m.end());
  SampleBatch dup;
  dup.images = Tensor4::from_data({2, 3, 32, 32}, std::move(twice));
  dup.masks = Tensor4::from_data({2, 1, 32, 32}, std::move(twice_m));
  dup.ids = {"a", "b"};
  SampleBatch d = augment(dup, ops, 5);
  bool differs = false;
  for (int64_t i = 0; i < plane; ++i) {
    if (d.images.values()[i] != d.images.values()[plane + i]) differs = true;
  }
  CHECK(differs);

  CHECK_THROWS_AS(augment(batch, {}, 5), UsageError);
}

TEST_CASE("augment op names round trip") {
  for (AugmentOp op : {AugmentOp::motion_blur, AugmentOp::median_blur,
                       AugmentOp::brightness_contrast, AugmentOp::shift,
                       AugmentOp::scale, AugmentOp::rotate}) {
    CHECK(augment_op_from_string(to_string(op)) == op);
  }
  CHECK_THROWS_AS(augment_op_from_string("solarize"), ConfigError);
}

TEST_CASE("png round trip") {
  const std::string dir = scratch_dir("recal_png_test");

  ImageU8 rgb;
  rgb.height = 9;
  rgb.width = 7;
  rgb.channels = 3;
  rgb.pixels.resize(9 * 7 * 3);
  for (size_t i = 0; i < rgb.pixels.size(); ++i) {
    rgb.pixels[i] = static_cast<uint8_t>((i * 37) % 256);
  }
  write_png(dir + "/rgb.png", rgb);
  ImageU8 back = read_png(dir + "/rgb.png");
  CHECK(back.height == 9);
  CHECK(back.width == 7);
  CHECK(back.channels == 3);
  CHECK(back.pixels == rgb.pixels);

  ImageU8 gray;
  gray.height = 5;
  gray.width = 6;
  gray.channels = 1;
  gray.pixels = {0,  255, 17, 4,   200, 3,  9,  10, 11, 12, 13, 14, 15, 16, 18,
                 19, 20,  21, 219, 23,  24, 25, 26, 27, 28, 29, 30, 31, 32, 33};
  write_png(dir + "/gray.png", gray);
  ImageU8 gback = read_png(dir + "/gray.png");
  CHECK(gback.channels == 1);
  CHECK(gback.pixels == gray.pixels);

  CHECK_THROWS_AS(read_png(dir + "/missing.png"), IoError);
  {
    std::ofstream junk(dir + "/junk.png", std::ios::binary);
    junk << "not a png at all";
  }
  CHECK_THROWS_AS(read_png(dir + "/junk.png"), IoError);
  fs::remove_all(dir);
}

TEST_CASE("sample io quantizes once") {
  const std::string dir = scratch_dir("recal_sample_test");
  SampleBatch batch = generate(small_spec("lens", 77), 2);

  write_sample(dir, "s0", batch, 0);
  SampleBatch first = read_sample(dir, "s0");
  CHECK(first.ids == std::vector<std::string>{"s0"});
  CHECK(first.images.shape() == Shape4{1, 3, 32, 32});

  // Masks were binary to begin with, so they survive exactly.
  const real* mi = batch.masks.values().data();
  for (int64_t i = 0; i < 32 * 32; ++i) CHECK(first.masks.values()[i] == mi[i]);

  // The u8 grid is a fixed point: writing the read-back sample changes nothing.
  write_sample(dir, "s0b", first, 0);
  SampleBatch second = read_sample(dir, "s0b");
  CHECK(same_values(second.images, first.images));
  CHECK(same_values(second.masks, first.masks));

  // And the quantization error is bounded by half a step.
  const real* ii = batch.images.values().data();
  for (int64_t i = 0; i < 3 * 32 * 32; ++i) {
    CHECK(std::abs(first.images.values()[i] - ii[i]) <= real(0.5) / 255 + real(1e-12));
  }

  CHECK_THROWS_AS(read_sample(dir, "nope"), IoError);
  CHECK_THROWS_AS(write_sample(dir, "oob", batch, 2), UsageError);

  // A gray mask value that is neither 0 nor 255 is corrupt, not solvable by
  // thresholding on the way in.
  ImageU8 bad;
  bad.height = 32;
  bad.width = 32;
  bad.channels = 1;
  bad.pixels.assign(32 * 32, 0);
  bad.pixels[5] = 7;
  write_png(dir + "/s0_mask.png", bad);
  CHECK_THROWS_AS(read_sample(dir, "s0"), IoError);
  fs::remove_all(dir);
}

TEST_CASE("manifest round trip") {
  const std::string root = scratch_dir("recal_manifest_test");
  const std::vector<ManifestEntry> entries = {
      {"0000", "pupil", "train", 11},
      {"0001", "pupil", "test", 12},
      {"0000", "iris", "train", 13},
  };
  write_manifest(root, entries);
  const auto back = read_manifest(root);
  REQUIRE(back.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(back[i].id == entries[i].id);
    CHECK(back[i].object_class == entries[i].object_class);
    CHECK(back[i].split == entries[i].split);
    CHECK(back[i].seed == entries[i].seed);
  }

  CHECK_THROWS_AS(read_manifest(root + "/nowhere"), IoError);
  {
    std::ofstream out(root + "/manifest.csv", std::ios::trunc);
    out << "id;class;split;seed\n";
  }
  CHECK_THROWS_AS(read_manifest(root), IoError);
  {
    std::ofstream out(root + "/manifest.csv", std::ios::trunc);
    out << "id,class,split,seed\n0000,pupil,train\n";
  }
  CHECK_THROWS_AS(read_manifest(root), IoError);
  {
    std::ofstream out(root + "/manifest.csv", std::ios::trunc);
    out << "id,class,split,seed\n0000,pupil,train,notanumber\n";
  }
  CHECK_THROWS_AS(read_manifest(root), IoError);
  fs::remove_all(root);
}

TEST_CASE("split io preserves manifest order") {
  const std::string root = scratch_dir("recal_split_test");
  SampleBatch batch = generate(small_spec("pupil", 21), 3);

  auto rows = write_split(root, "pupil", "train", batch, 21);
  REQUIRE(rows.size() == 3);
  for (const auto& r : rows) {
    CHECK(r.object_class == "pupil");
    CHECK(r.split == "train");
    CHECK(r.seed == 21);
  }
  // Reverse the manifest: read_split must follow it, not directory order.
  std::reverse(rows.begin(), rows.end());
  write_manifest(root, rows);

  SampleBatch loaded = read_split(root, "pupil", "train");
  REQUIRE(loaded.count() == 3);
  CHECK(loaded.ids == std::vector<std::string>{"0002", "0001", "0000"});
  const int64_t plane = 32 * 32;
  for (int64_t s = 0; s < 3; ++s) {
    const real* want = batch.masks.values().data() + (2 - s) * plane;
    const real* got = loaded.masks.values().data() + s * plane;
    for (int64_t i = 0; i < plane; ++i) CHECK(got[i] == want[i]);
  }

  CHECK_THROWS_AS(read_split(root, "iris", "train"), IoError);
  fs::remove_all(root);
}
