#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "recal/blocks.hpp"
#include "recal/gradcheck.hpp"
#include "recal/ops.hpp"
#include "recal/rng.hpp"

using namespace recal;

namespace {

Tensor4 rand_t(const Shape4& s, Rng& rng, real lo = -1, real hi = 1,
               bool grad = false) {
  std::vector<real> v(static_cast<size_t>(s.numel()));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor4::from_data(s, std::move(v), grad);
}

}  // namespace

TEST_CASE("weight census per block") {
  for (int64_t c : {32, 64, 128, 256, 512}) {
    ParamStore store;
    make_recal_module(store, "recal", c);
    make_se_block(store, "se", c);
    make_scse_block(store, "scse", c);
    CHECK(store.weight_census("recal.") == c * c + 22 * c + 4);
    CHECK(store.weight_census("se.") == c * c);
    CHECK(store.weight_census("scse.") == c * c + c);
    CHECK(store.weight_census("recal.") - store.weight_census("scse.") == 21 * c + 4);
  }
}

TEST_CASE("region squeeze block") {
  Rng rng(41);
  ParamStore store;
  auto p = make_res_block(store, "res", 8);
  // Pyramid: three pooled projections, the direct one, and the 4->1 fusion.
  CHECK(store.weight_census("res.") == 4 * 8 + 4);
  store.init_kaiming(7);

  Tensor4 x = rand_t({2, 8, 6, 7}, rng);
  Tensor4 map = res_block(x, p);
  CHECK(map.shape() == Shape4{2, 1, 6, 7});
  for (int64_t i = 0; i < map.numel(); ++i) {
    CHECK(map.values()[i] > 0);
    CHECK(map.values()[i] < 1);
  }
}

TEST_CASE("channel squeeze block") {
  Rng rng(42);
  ParamStore store;
  auto p = make_chs_block(store, "chs", 8);
  CHECK(store.weight_census("chs.") == 8 * 8);
  store.init_kaiming(7);

  Tensor4 x = rand_t({2, 8, 5, 5}, rng);
  Tensor4 vec = chs_block(x, p);
  CHECK(vec.shape() == Shape4{2, 8, 1, 1});
  for (int64_t i = 0; i < vec.numel(); ++i) CHECK(vec.values()[i] >= 0);

  ParamStore bad;
  CHECK_THROWS_AS(make_chs_block(bad, "chs", 5), ConfigError);  // 2 does not divide 5
}

TEST_CASE("recal module shape preservation") {
  Rng rng(43);
  for (auto [n, c, h, w] : {std::array<int64_t, 4>{1, 2, 4, 4},
                            std::array<int64_t, 4>{2, 6, 5, 7},
                            std::array<int64_t, 4>{3, 16, 8, 3}}) {
    ParamStore store;
    auto p = make_recal_module(store, "m", c);
    store.init_kaiming(9);
    Tensor4 x = rand_t({n, c, h, w}, rng);
    CHECK(recal_module(x, p).shape() == Shape4{n, c, h, w});
  }
  ParamStore store;
  CHECK_THROWS_AS(make_recal_module(store, "m", 1), ConfigError);
}

TEST_CASE("grouped fusion isolates channel pairs") {
  // Output channel p of the fusion conv reads exactly the interleaved pair
  // (2p, 2p+1); perturbing any other pair must not move it at all.
  Rng rng(44);
  const int64_t c = 6, h = 5, w = 5;
  ConvSpec fuse{3, 3, c, c, 1, 1, 1, 1, true};
  Tensor4 weight = rand_t(fuse.weight_shape(2 * c), rng);
  Tensor4 bias = rand_t(fuse.bias_shape(), rng);

  Tensor4 ch = rand_t({1, c, h, w}, rng);
  Tensor4 re = rand_t({1, c, h, w}, rng);
  Tensor4 base = conv2d(interleave_channels(ch, re), fuse, weight, bias);

  for (int64_t q = 0; q < c; ++q) {
    std::vector<real> chv(ch.values().begin(), ch.values().end());
    std::vector<real> rev(re.values().begin(), re.values().end());
    for (int64_t i = 0; i < h * w; ++i) {
      chv[static_cast<size_t>(q * h * w + i)] += real(0.37);
      rev[static_cast<size_t>(q * h * w + i)] -= real(0.11);
    }
    Tensor4 out = conv2d(
        interleave_channels(Tensor4::from_data({1, c, h, w}, std::move(chv)),
                            Tensor4::from_data({1, c, h, w}, std::move(rev))),
        fuse, weight, bias);
    for (int64_t p = 0; p < c; ++p) {
      real worst = 0;
      for (int64_t i = 0; i < h * w; ++i) {
        worst = std::max(worst, std::abs(out.values()[p * h * w + i] -
                                         base.values()[p * h * w + i]));
      }
      if (p == q) {
        CHECK(worst > 0);
      } else {
        CHECK(worst < 1e-12);
      }
    }
  }
}

TEST_CASE("se and scse blocks") {
  Rng rng(45);
  ParamStore store;
  auto se = make_se_block(store, "se", 8);
  auto scse = make_scse_block(store, "scse", 8);
  store.init_kaiming(3);

  Tensor4 x = rand_t({2, 8, 4, 4}, rng, 0, 1);
  Tensor4 y = se_block(x, se);
  CHECK(y.shape() == x.shape());
  // A sigmoid gate can only shrink magnitudes.
  for (int64_t i = 0; i < x.numel(); ++i) {
    CHECK(std::abs(y.values()[i]) <= std::abs(x.values()[i]) + 1e-12);
  }

  Tensor4 z = scse_block(x, scse);
  CHECK(z.shape() == x.shape());
}

TEST_CASE("recal module gradients") {
  Rng rng(46);
  ParamStore store;
  auto p = make_recal_module(store, "m", 4);
  store.init_kaiming(11);

  std::vector<Tensor4> leaves;
  leaves.push_back(rand_t({2, 4, 6, 6}, rng, -1, 1, true));
  for (const auto& slot : store.slots()) {
    if (slot.learnable()) leaves.push_back(slot.tensor);
  }
  GradCheckOptions opts;
  opts.max_coords = 150;
  auto r = check_gradients(
      [&] { return sum_all(sigmoid(recal_module(leaves[0], p))); }, leaves, opts);
  INFO(r.detail);
  CHECK(r.passed);
  CHECK(r.checked > 0);
}

TEST_CASE("se and scse gradients") {
  Rng rng(47);
  for (const char* kind : {"se", "scse"}) {
    ParamStore store;
    SeBlockParams se;
    ScseBlockParams sc;
    if (std::string(kind) == "se") {
      se = make_se_block(store, "b", 4);
    } else {
      sc = make_scse_block(store, "b", 4);
    }
    store.init_kaiming(13);
    std::vector<Tensor4> leaves;
    leaves.push_back(rand_t({2, 4, 5, 5}, rng, -1, 1, true));
    for (const auto& slot : store.slots()) {
      if (slot.learnable()) leaves.push_back(slot.tensor);
    }
    GradCheckOptions opts;
    opts.max_coords = 120;
    auto r = check_gradients(
        [&] {
          return sum_all(sigmoid(std::string(kind) == "se" ? se_block(leaves[0], se)
                                                           : scse_block(leaves[0], sc)));
        },
        leaves, opts);
    INFO(kind << ": " << r.detail);
    CHECK(r.passed);
  }
}

TEST_CASE("param store determinism and registration") {
  ParamStore a, b;
  make_recal_module(a, "m", 8);
  // Different registration order must not change per-slot streams.
  make_se_block(b, "other", 8);
  make_recal_module(b, "m", 8);
  a.init_kaiming(99);
  b.init_kaiming(99);
  for (const auto& slot : a.slots()) {
    Tensor4 other = b.at(slot.name);
    REQUIRE(other.shape() == slot.tensor.shape());
    for (int64_t i = 0; i < other.numel(); ++i) {
      CHECK(other.values()[i] == slot.tensor.values()[i]);
    }
  }

  ParamStore dup;
  make_recal_module(dup, "m", 4);
  CHECK_THROWS_AS(make_recal_module(dup, "m", 4), ConfigError);
  CHECK_THROWS_AS(dup.at("missing"), UsageError);
}

TEST_CASE("gradcheck harness self-test") {
  // A deliberately broken gradient must be caught.
  Tensor4 x = Tensor4::from_data({1, 1, 1, 3}, {1, 2, 3}, true);
  std::vector<Tensor4> leaves{x};
  GradCheckOptions opts;
  auto r = check_gradients(
      [&] {
        Tensor4 y = sum_all(elementwise_mul(leaves[0], leaves[0]));
        return y;
      },
      leaves, opts);
  CHECK(r.passed);

  // Near-kink coordinates resolve by refinement or one-sided slopes: the
  // point derivative of relu is well defined on either side of zero even
  // when the first quotient straddles it.
  Tensor4 near = Tensor4::from_data({1, 1, 1, 4}, {5e-4, -5e-4, 1e-5, -1e-5}, true);
  std::vector<Tensor4> near_leaves{near};
  auto rn = check_gradients(
      [&] { return sum_all(relu(near_leaves[0])); }, near_leaves, opts);
  CHECK(rn.excluded == 0);
  CHECK(rn.failed == 0);
  CHECK(rn.passed);

  // Two kinks bracketing the point closer than every refinement step blend
  // into every quotient, one-sided ones included; that coordinate must be
  // excluded rather than failed.
  Tensor4 x2 = Tensor4::from_data({1, 1, 1, 1}, {5e-6}, true);
  Tensor4 c2 = Tensor4::from_data({1, 1, 1, 1}, {8e-6});
  std::vector<Tensor4> kink_leaves{x2};
  auto rk = check_gradients(
      [&] {
        return sum_all(channel_concat(relu(kink_leaves[0]),
                                      elementwise_max(kink_leaves[0], c2)));
      },
      kink_leaves, opts);
  CHECK(rk.excluded == 1);
  CHECK(rk.failed == 0);
  CHECK(rk.checked == 0);
  CHECK_FALSE(rk.passed);  // everything excluded proves nothing
}
