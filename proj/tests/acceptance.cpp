// End-to-end acceptance checks, one numbered line per claim. Each check is
// self-contained and timed; the process exits with the number of failures.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "recal/cli.hpp"
#include "recal/gradcheck.hpp"
#include "recal/model.hpp"
#include "recal/rng.hpp"
#include "recal/train.hpp"

using namespace recal;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void expect(bool cond, const std::string& what) {
  if (!cond) throw VerificationError(what);
}

void crit(int idx, const char* name, const std::function<std::string()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  std::string note;
  bool pass = true;
  try {
    note = body();
  } catch (const std::exception& e) {
    pass = false;
    note = e.what();
    ++failures;
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("[%s] %2d %s: %s (%.1f s)\n", pass ? "PASS" : "FAIL", idx, name,
              note.c_str(), secs);
  std::fflush(stdout);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  expect(in.good(), "cannot read " + path);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

Tensor4 random_tensor(const Shape4& s, Rng& rng, real lo, real hi) {
  std::vector<real> v(static_cast<size_t>(s.numel()));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor4::from_data(s, std::move(v));
}

// The four-sample fixture the overfit check memorizes: large centered pupils
// with crisp boundaries, so the IoU target is honest about capacity rather
// than about boundary rounding.
PhantomSpec overfit_spec() {
  PhantomSpec spec;
  spec.height = 64;
  spec.width = 64;
  spec.object_class = "pupil";
  spec.center_jitter = real(0.02);
  spec.pupil_radius_lo = real(0.20);
  spec.pupil_radius_hi = real(0.28);
  spec.iris_radius_lo = real(0.32);
  spec.lens_major_lo = real(1.05);
  spec.lens_major_hi = real(1.25);
  spec.noise_sigma = real(0.01);
  spec.blur_probability = 0;
  spec.highlight_probability = 0;
  spec.seed = 42;
  return spec;
}

std::string check_census() {
  ModelConfig cfg;  // width_scale 1: the published operating point
  const auto widths = cfg.placement_channels();
  std::string note = "placements";
  int64_t sum = 0;
  int64_t baseline_total = 0, recal_total = 0;
  {
    SegNet net(cfg);
    for (size_t i = 0; i < 5; ++i) {
      const int64_t c = widths[i];
      const int64_t registered = net.placement_weight_count(i);
      expect(registered == c * c + 22 * c + 4,
             str_cat("site ", i, " registered ", registered, " != formula for C=", c));
      expect(registered == net.placement_weight_recount(i),
             str_cat("site ", i, " recount mismatch"));
      sum += registered;
      note += str_cat(i == 0 ? " " : "/", registered);
    }
    expect(sum == 371028, str_cat("placement sum ", sum, " != 371028"));
    recal_total = net.total_weight_count();
    expect(recal_total == net.total_weight_recount(), "total recount mismatch");
  }
  {
    ModelConfig bcfg = cfg;
    bcfg.variant = Variant::baseline;
    baseline_total = SegNet(bcfg).total_weight_count();
  }
  expect(recal_total == baseline_total + sum,
         str_cat("recal total ", recal_total, " != baseline ", baseline_total, " + ",
                 sum));
  return note + str_cat(", sum 371028, totals ", recal_total, "/", baseline_total);
}

std::string check_scse_delta() {
  ModelConfig cfg;
  int64_t recal_total, scse_total;
  {
    SegNet net(cfg);
    recal_total = net.total_weight_count();
  }
  {
    ModelConfig scfg = cfg;
    scfg.variant = Variant::scse;
    scse_total = SegNet(scfg).total_weight_count();
  }
  const int64_t delta = recal_total - scse_total;
  expect(delta >= 20000 && delta <= 22000,
         str_cat("delta ", delta, " outside [20000, 22000]"));
  return str_cat("recal - scse = ", delta);
}

std::string check_gradients_everywhere() {
  const char* ops[] = {"conv2d",   "avg_pool", "global_avg_pool",
                       "max_pool2", "bilinear_upsample2", "relu",
                       "sigmoid",  "mul",      "concat",
                       "interleave", "batch_norm", "layer_norm",
                       "loss"};
  for (const char* op : ops) {
    expect(run_cli({"gradcheck", str_cat("op:", op)}) == 0, str_cat("op:", op));
  }
  expect(run_cli({"gradcheck", "block:recal"}) == 0, "block:recal");
  expect(run_cli({"gradcheck", "model"}) == 0, "model");
  return str_cat(std::size(ops), " ops, recal module, width-scale-8 model");
}

std::string check_shapes() {
  Rng rng(2024);
  NoGradGuard guard;
  for (int trial = 0; trial < 20; ++trial) {
    const int64_t c = 2 * (1 + static_cast<int64_t>(rng.uniform_index(6)));
    const int64_t n = 1 + static_cast<int64_t>(rng.uniform_index(2));
    const int64_t h = 3 + static_cast<int64_t>(rng.uniform_index(7));
    const int64_t w = 3 + static_cast<int64_t>(rng.uniform_index(7));
    ParamStore store;
    auto params = make_recal_module(store, "m", c);
    store.init_kaiming(rng.next_u64());
    Tensor4 x = random_tensor({n, c, h, w}, rng, -1, 1);
    const Shape4 out = recal_module(x, params).shape();
    expect(out == x.shape(), str_cat("module shape ", to_string(out), " != input ",
                                     to_string(x.shape())));
  }

  ModelConfig cfg;
  cfg.width_scale = 8;
  for (int64_t hw : {32, 64, 96}) {
    SegNet net(cfg);
    net.init_params(5);
    Tensor4 x = random_tensor({1, 3, hw, hw}, rng, 0, 1);
    const Shape4 out = net.forward(x, false).shape();
    expect(out == Shape4{1, 1, hw, hw},
           str_cat("net output ", to_string(out), " for input ", hw, "x", hw));
  }
  return "20 module shapes, net at 32/64/96";
}

std::string check_fusion_isolation() {
  const int64_t c = 6, h = 7, w = 7;
  Rng rng(99);
  Tensor4 a = random_tensor({1, c, h, w}, rng, -1, 1);
  Tensor4 b = random_tensor({1, c, h, w}, rng, -1, 1);
  ConvSpec spec{3, 3, c, c, 1, 1, 1, 1, true};
  Tensor4 weight = random_tensor(spec.weight_shape(2 * c), rng, -1, 1);
  Tensor4 bias = random_tensor(spec.bias_shape(), rng, -1, 1);

  NoGradGuard guard;
  Tensor4 base = conv2d(interleave_channels(a, b), spec, weight, bias);

  real worst_cross = 0, weakest_self = -1;
  for (int64_t q = 0; q < c; ++q) {
    Tensor4 a2 = Tensor4::from_data(
        a.shape(), std::vector<real>(a.values().begin(), a.values().end()));
    Tensor4 b2 = Tensor4::from_data(
        b.shape(), std::vector<real>(b.values().begin(), b.values().end()));
    for (int64_t i = 0; i < h * w; ++i) {
      a2.values_mut()[q * h * w + i] += real(0.37);
      b2.values_mut()[q * h * w + i] -= real(0.11);
    }
    Tensor4 out = conv2d(interleave_channels(a2, b2), spec, weight, bias);
    for (int64_t p = 0; p < c; ++p) {
      real diff = 0;
      for (int64_t i = 0; i < h * w; ++i) {
        diff = std::max(diff, std::abs(out.values()[p * h * w + i] -
                                       base.values()[p * h * w + i]));
      }
      if (p == q) {
        weakest_self = weakest_self < 0 ? diff : std::min(weakest_self, diff);
      } else {
        worst_cross = std::max(worst_cross, diff);
      }
    }
  }
  expect(worst_cross < real(1e-12), str_cat("cross-talk ", worst_cross));
  expect(weakest_self > 0, "perturbed pair left its own channel unchanged");
  return str_cat("cross-pair |delta| ", worst_cross, ", own-pair responds");
}

std::string check_loss_oracles() {
  LossConfig cfg;
  Tensor4 truth = Tensor4::from_data({1, 1, 2, 2}, {1, 1, 1, 1});
  Tensor4 perfect = Tensor4::from_data({1, 1, 2, 2}, {1, 1, 1, 1});
  const real zero = segmentation_loss(perfect, truth, cfg).scalar_value();
  expect(zero == 0, str_cat("perfect prediction lost ", zero, ", want exact 0"));

  Tensor4 half = Tensor4::from_data({1, 1, 2, 2},
                                    std::vector<real>(4, real(0.5)));
  const real got = segmentation_loss(half, truth, cfg).scalar_value();
  const real want = real(0.8) * std::log(real(2)) -
                    real(0.2) * std::log(real(5) / real(7));
  expect(std::abs(got - want) < real(1e-9),
         str_cat("uniform-half loss ", got, " vs ", want));

  LossConfig pure;
  pure.lambda = 1;
  Tensor4 p = Tensor4::from_data({1, 1, 1, 3}, {real(0.9), real(0.25), real(0.5)});
  Tensor4 t = Tensor4::from_data({1, 1, 1, 3}, {1, 0, 1});
  const real bce = -(std::log(real(0.9)) + std::log(real(0.75)) +
                     std::log(real(0.5))) / 3;
  const real lam1 = segmentation_loss(p, t, pure).scalar_value();
  expect(std::abs(lam1 - bce) < real(1e-12),
         str_cat("lambda=1 loss ", lam1, " vs mean BCE ", bce));
  return "perfect=0 exactly, uniform-half and lambda=1 match closed forms";
}

std::string check_tiny_overfit() {
  const SampleBatch data = generate(overfit_spec(), 4);

  ModelConfig mc;
  mc.width_scale = 8;
  mc.input_h = 64;
  mc.input_w = 64;
  TrainConfig tc;
  tc.epochs = 75;
  tc.batch_size = 1;  // 300 steps total
  tc.clip_mode = ClipMode::value;
  tc.seed = 3;

  auto run = [&] {
    SegNet net(mc);
    net.init_params(1);
    return train(net, data, data, tc, LossConfig{}, "");
  };

  const TrainResult r = run();
  expect(r.steps == 300, str_cat("took ", r.steps, " steps"));
  real best_loss = 1e9, best_iou = 0;
  bool met = false;
  for (const auto& e : r.epochs) {
    best_loss = std::min(best_loss, e.train_loss);
    best_iou = std::max(best_iou, e.val_iou_mean);
    if (e.train_loss < real(0.05) && e.val_iou_mean > real(0.95)) met = true;
  }
  expect(met, str_cat("never reached loss<0.05 with IoU>0.95; best loss ", best_loss,
                      ", best IoU ", best_iou));

  const TrainResult again = run();
  expect(again.csv() == r.csv(), "repeat run diverged");
  return str_cat("loss ", best_loss, ", train IoU ", best_iou,
                 " in 300 steps, repeat identical");
}

std::string check_ablation_grid() {
  PhantomSpec spec;
  spec.height = 32;
  spec.width = 32;
  spec.object_class = "pupil";
  spec.seed = 100;
  const SampleBatch train_set = generate(spec, 64);
  spec.seed = 200;
  const SampleBatch val_set = generate(spec, 16);

  const Variant variants[] = {Variant::baseline, Variant::recal};
  const real lrs[] = {real(0.005), real(0.002)};

  auto run_cell = [&](Variant v, real lr) {
    ModelConfig mc;
    mc.variant = v;
    mc.width_scale = 8;
    mc.input_h = 32;
    mc.input_w = 32;
    TrainConfig tc;
    tc.lr0 = lr;
    tc.epochs = 3;
    tc.batch_size = 4;
    tc.seed = 17;
    SegNet net(mc);
    net.init_params(17);
    return train(net, train_set, val_set, tc, LossConfig{}, "");
  };

  std::string grid = "\n  variant   lr0      final val IoU (%)\n";
  int cells = 0;
  TrainResult first_cell;
  for (Variant v : variants) {
    for (real lr : lrs) {
      const TrainResult r = run_cell(v, lr);
      expect(r.epochs.size() == 3, "cell stopped early");
      const real iou = r.epochs.back().val_iou_mean;
      expect(std::isfinite(iou) && std::isfinite(r.epochs.back().train_loss),
             "cell produced non-finite results");
      char row[96];
      std::snprintf(row, sizeof row, "  %-9s %-8.4f %.2f\n", to_string(v),
                    static_cast<double>(lr), static_cast<double>(iou) * 100);
      grid += row;
      ++cells;
      if (cells == 1) first_cell = r;
    }
  }
  expect(cells == 4, "grid is not 2x2");
  const TrainResult repeat = run_cell(variants[0], lrs[0]);
  expect(repeat.csv() == first_cell.csv(), "repeated cell diverged");
  std::fputs(grid.c_str(), stdout);
  return "2 variants x 2 learning rates completed, repeated cell identical";
}

std::string check_metric_oracles() {
  Rng rng(777);
  real worst_identity = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<uint8_t> a(48), b(48);
    int64_t inter = 0, uni = 0;
    for (size_t i = 0; i < a.size(); ++i) {
      a[i] = rng.bernoulli(real(0.5)) ? 1 : 0;
      b[i] = rng.bernoulli(real(0.5)) ? 1 : 0;
      inter += a[i] & b[i];
      uni += a[i] | b[i];
    }
    const real iou = iou_binary(a, b);
    const real dice = dice_binary(a, b);
    const real want_iou = uni == 0 ? 1 : real(inter) / real(uni);
    expect(iou == want_iou, str_cat("IoU ", iou, " != ", want_iou));
    const real identity = 2 * iou / (1 + iou);
    worst_identity = std::max(worst_identity, std::abs(dice - identity));
    expect(worst_identity < real(1e-12),
           str_cat("Dice identity off by ", worst_identity));
  }
  return str_cat("1000 pairs exact, Dice identity within ", worst_identity);
}

std::string check_csv_determinism() {
  const std::string root = (fs::temp_directory_path() / "recal_acceptance").string();
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string cfg = root + "/run.cfg";
  {
    std::ofstream out(cfg);
    out << "model.variant=recal\nmodel.width_scale=8\n"
        << "data.root=" << root << "/data\n"
        << "data.classes=pupil\ndata.class=pupil\n"
        << "data.height=32\ndata.width=32\n"
        << "data.train_count=4\ndata.test_count=2\ndata.seed=3\n"
        << "train.epochs=2\ntrain.batch_size=2\ntrain.seed=9\n";
  }
  expect(run_cli({"generate-data", "--config", cfg}) == 0, "generate-data failed");
  expect(run_cli({"train", "--config", cfg, "--out", root + "/a"}) == 0, "train a");
  expect(run_cli({"train", "--config", cfg, "--out", root + "/b"}) == 0, "train b");
  expect(slurp(root + "/a/epochs.csv") == slurp(root + "/b/epochs.csv"),
         "train logs differ between identical runs");

  for (const char* out : {"ea", "eb"}) {
    expect(run_cli({"eval", "--config", cfg, "--checkpoint", root + "/a/best.ckpt",
                    "--out", root + "/" + out}) == 0,
           "eval failed");
  }
  expect(slurp(root + "/ea/metrics.csv") == slurp(root + "/eb/metrics.csv"),
         "metrics differ between identical evals");
  expect(slurp(root + "/ea/per_sample.csv") == slurp(root + "/eb/per_sample.csv"),
         "per-sample metrics differ between identical evals");
  fs::remove_all(root);
  return "train and eval CSVs bit-identical across reruns";
}

}  // namespace

int main() {
  std::printf("acceptance checks\n");
  crit(1, "parameter census", check_census);
  crit(2, "scse parameter delta", check_scse_delta);
  crit(3, "gradient fidelity", check_gradients_everywhere);
  crit(4, "shape preservation", check_shapes);
  crit(5, "fusion pair isolation", check_fusion_isolation);
  crit(6, "loss oracles", check_loss_oracles);
  crit(7, "tiny overfit", check_tiny_overfit);
  crit(8, "ablation grid", check_ablation_grid);
  crit(9, "metric oracles", check_metric_oracles);
  crit(10, "csv determinism", check_csv_determinism);
  std::printf("%d of 10 passed\n", 10 - failures);
  return failures;
}
