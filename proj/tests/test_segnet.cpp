#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <vector>

#include "recal/model.hpp"
#include "recal/ops.hpp"
#include "recal/rng.hpp"

using namespace recal;
namespace fs = std::filesystem;

namespace {

Tensor4 rand_images(int64_t n, int64_t c, int64_t h, int64_t w, uint64_t seed) {
  Rng rng(seed);
  std::vector<real> v(static_cast<size_t>(n * c * h * w));
  for (auto& x : v) x = rng.uniform(0, 1);
  return Tensor4::from_data({n, c, h, w}, std::move(v));
}

ModelConfig small_cfg(Variant v) {
  ModelConfig cfg;
  cfg.variant = v;
  cfg.width_scale = 8;
  cfg.input_h = 32;
  cfg.input_w = 32;
  return cfg;
}

}  // namespace

TEST_CASE("config validation and canonical form") {
  ModelConfig cfg;
  CHECK(cfg.canonical_string() ==
        "variant=recal;width_scale=1;in_channels=3;out_channels=1;input=64x64;"
        "placements=11111;reduction=2");
  CHECK(ModelConfig::from_canonical_string(cfg.canonical_string()).digest() ==
        cfg.digest());

  ModelConfig bad = cfg;
  bad.width_scale = 3;  // does not divide 32
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.input_h = 40;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(ModelConfig::from_canonical_string("variant=recal;nope=1"),
                  ConfigError);

  ModelConfig base = cfg;
  base.variant = Variant::baseline;
  for (bool p : base.active_placements()) CHECK_FALSE(p);
}

TEST_CASE("paper-scale parameter census") {
  ModelConfig cfg;  // width_scale 1, all placements
  SegNet net(cfg);

  const int64_t expected[5] = {273412, 71172, 19204, 5508, 1732};
  const int64_t widths[5] = {512, 256, 128, 64, 32};
  int64_t sum = 0;
  for (size_t i = 0; i < 5; ++i) {
    const int64_t c = widths[i];
    CHECK(net.placement_weight_count(i) == c * c + 22 * c + 4);
    CHECK(net.placement_weight_count(i) == expected[i]);
    CHECK(net.placement_weight_recount(i) == expected[i]);
    sum += expected[i];
  }
  CHECK(sum == 371028);
  CHECK(net.total_weight_count() == 22915124);
  CHECK(net.total_weight_recount() == 22915124);

  ModelConfig bcfg = cfg;
  bcfg.variant = Variant::baseline;
  SegNet baseline(bcfg);
  CHECK(baseline.total_weight_count() == 22915124 - 371028);
  CHECK(baseline.total_weight_count() == 22544096);

  ModelConfig scfg = cfg;
  scfg.variant = Variant::scse;
  SegNet scse(scfg);
  CHECK(net.total_weight_count() - scse.total_weight_count() == 20852);
}

TEST_CASE("placement subsets") {
  ModelConfig cfg = small_cfg(Variant::recal);
  cfg.placements = {true, false, false, false, true};
  SegNet net(cfg);
  const auto widths = cfg.placement_channels();
  CHECK(net.placement_weight_count(0) == widths[0] * widths[0] + 22 * widths[0] + 4);
  CHECK(net.placement_weight_count(1) == 0);
  CHECK(net.placement_weight_count(4) == widths[4] * widths[4] + 22 * widths[4] + 4);

  ModelConfig all = small_cfg(Variant::recal);
  SegNet full(all);
  ModelConfig none = small_cfg(Variant::baseline);
  SegNet base(none);
  int64_t placed = 0;
  for (size_t i = 0; i < 5; ++i) placed += full.placement_weight_count(i);
  CHECK(full.total_weight_count() == base.total_weight_count() + placed);
}

TEST_CASE("variants share the backbone slot layout") {
  SegNet a(small_cfg(Variant::baseline));
  SegNet b(small_cfg(Variant::recal));
  SegNet c(small_cfg(Variant::scse));

  auto backbone = [](const SegNet& net) {
    std::vector<std::pair<std::string, Shape4>> out;
    for (const auto& slot : net.params().slots()) {
      if (slot.name.rfind("calib.", 0) != 0) out.push_back({slot.name, slot.tensor.shape()});
    }
    return out;
  };
  CHECK(backbone(a) == backbone(b));
  CHECK(backbone(b) == backbone(c));
}

TEST_CASE("forward shapes and output range") {
  for (int64_t hw : {32, 64, 96}) {
    SegNet net(small_cfg(Variant::recal));
    net.init_params(5);
    Tensor4 x = rand_images(2, 3, hw, hw, 17);
    NoGradGuard guard;
    Tensor4 y = net.forward(x, false);
    CHECK(y.shape() == Shape4{2, 1, hw, hw});
    for (int64_t i = 0; i < y.numel(); ++i) {
      CHECK(y.values()[i] > 0);
      CHECK(y.values()[i] < 1);
    }
  }
}

TEST_CASE("forward input validation") {
  SegNet net(small_cfg(Variant::recal));
  net.init_params(5);
  CHECK_THROWS_AS(net.forward(rand_images(1, 4, 32, 32, 1), false), ConfigError);
  CHECK_THROWS_AS(net.forward(rand_images(1, 3, 40, 32, 1), false), ConfigError);
  CHECK_THROWS_AS(net.forward(rand_images(1, 3, 8, 8, 1), false), ConfigError);
}

TEST_CASE("stage taps") {
  SegNet net(small_cfg(Variant::recal));
  net.init_params(6);
  Tensor4 x = rand_images(1, 3, 64, 32, 9);
  NoGradGuard guard;
  std::vector<std::pair<std::string, Tensor4>> taps;
  net.forward(x, false, &taps);

  const std::vector<std::pair<std::string, Shape4>> want = {
      {"E1", {1, 8, 64, 32}},  {"E2", {1, 16, 32, 16}}, {"E3", {1, 32, 16, 8}},
      {"E4", {1, 64, 8, 4}},   {"E5", {1, 64, 4, 2}},   {"D4", {1, 32, 8, 4}},
      {"D3", {1, 16, 16, 8}},  {"D2", {1, 8, 32, 16}},  {"D1", {1, 4, 64, 32}},
  };
  REQUIRE(taps.size() == want.size());
  for (size_t i = 0; i < want.size(); ++i) {
    CHECK(taps[i].first == want[i].first);
    CHECK(taps[i].second.shape() == want[i].second);
  }
}

TEST_CASE("train and eval forwards differ") {
  SegNet net(small_cfg(Variant::recal));
  net.init_params(8);
  Tensor4 x = rand_images(2, 3, 32, 32, 21);
  NoGradGuard guard;
  Tensor4 tr = net.forward(x, true);
  Tensor4 ev = net.forward(x, false);
  bool differs = false;
  for (int64_t i = 0; i < tr.numel(); ++i) {
    if (tr.values()[i] != ev.values()[i]) differs = true;
  }
  CHECK(differs);
}

TEST_CASE("deterministic initialization") {
  SegNet a(small_cfg(Variant::recal));
  SegNet b(small_cfg(Variant::recal));
  a.init_params(123);
  b.init_params(123);
  Tensor4 x = rand_images(1, 3, 32, 32, 2);
  NoGradGuard guard;
  Tensor4 ya = a.forward(x, false);
  Tensor4 yb = b.forward(x, false);
  for (int64_t i = 0; i < ya.numel(); ++i) CHECK(ya.values()[i] == yb.values()[i]);

  SegNet c(small_cfg(Variant::recal));
  c.init_params(124);
  Tensor4 yc = c.forward(x, false);
  bool differs = false;
  for (int64_t i = 0; i < ya.numel(); ++i) {
    if (ya.values()[i] != yc.values()[i]) differs = true;
  }
  CHECK(differs);
}

TEST_CASE("checkpoint round trip and digest guard") {
  const std::string dir = (fs::temp_directory_path() / "recal_segnet_test").string();
  fs::create_directories(dir);
  const std::string path = dir + "/model.ckpt";

  SegNet net(small_cfg(Variant::recal));
  net.init_params(31);
  Tensor4 x = rand_images(2, 3, 32, 32, 33);
  NoGradGuard guard;
  // Push the running stats away from their initial values first.
  net.forward(x, true);
  Tensor4 before = net.forward(x, false);
  net.save(path);

  SegNet restored(small_cfg(Variant::recal));
  restored.load(path);
  Tensor4 after = restored.forward(x, false);
  REQUIRE(after.shape() == before.shape());
  for (int64_t i = 0; i < after.numel(); ++i) {
    CHECK(after.values()[i] == before.values()[i]);
  }

  SegNet other(small_cfg(Variant::scse));
  CHECK_THROWS_AS(other.load(path), ConfigError);

  const CheckpointInfo info = read_checkpoint_header(path);
  CHECK(info.config_digest == small_cfg(Variant::recal).digest());
  CHECK(ModelConfig::from_canonical_string(info.config_text).digest() ==
        info.config_digest);

  // Truncated file reports the byte offset.
  std::string bytes;
  {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    REQUIRE(f);
    char buf[4096];
    size_t got;
    while ((got = std::fread(buf, 1, sizeof buf, f)) > 0) bytes.append(buf, got);
    std::fclose(f);
  }
  const std::string cut = dir + "/cut.ckpt";
  {
    std::FILE* f = std::fopen(cut.c_str(), "wb");
    REQUIRE(f);
    std::fwrite(bytes.data(), 1, bytes.size() / 2, f);
    std::fclose(f);
  }
  SegNet victim(small_cfg(Variant::recal));
  CHECK_THROWS_AS(victim.load(cut), IoError);
  fs::remove_all(dir);
}
