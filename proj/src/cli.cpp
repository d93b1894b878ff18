#include "recal/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include <CLI11.hpp>

#include "recal/blocks.hpp"
#include "recal/config.hpp"
#include "recal/data.hpp"
#include "recal/gradcheck.hpp"
#include "recal/image_io.hpp"
#include "recal/model.hpp"
#include "recal/ops.hpp"
#include "recal/rng.hpp"
#include "recal/train.hpp"

namespace recal {

namespace fs = std::filesystem;

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(str_cat("cannot write '", path, "'"));
  out << text;
  if (!out) throw IoError(str_cat("write failed for '", path, "'"));
}

std::string pct2(real fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", static_cast<double>(fraction) * 100);
  return buf;
}

PhantomSpec split_spec(const DataConfig& data, const std::string& object_class,
                       const std::string& split) {
  PhantomSpec spec;
  spec.height = data.height;
  spec.width = data.width;
  spec.object_class = object_class;
  spec.noise_sigma = data.noise_sigma;
  spec.seed = mix_seed(data.seed, fnv1a64(str_cat(object_class, "/", split)));
  return spec;
}

int cmd_generate_data(const RunConfig& cfg) {
  cfg.data.validate();
  std::vector<ManifestEntry> manifest;
  for (const auto& object_class : cfg.data.classes) {
    for (const char* split : {"train", "test"}) {
      const int64_t count =
          std::string(split) == "train" ? cfg.data.train_count : cfg.data.test_count;
      const PhantomSpec spec = split_spec(cfg.data, object_class, split);
      const SampleBatch batch = generate(spec, count);
      auto rows = write_split(cfg.data.root, object_class, split, batch, spec.seed);
      manifest.insert(manifest.end(), rows.begin(), rows.end());
      std::cout << "wrote " << count << " samples to " << cfg.data.root << "/"
                << object_class << "/" << split << "\n";
    }
  }
  write_manifest(cfg.data.root, manifest);
  write_text(str_cat(cfg.data.root, "/resolved.cfg"), cfg.resolved_text());
  std::cout << "manifest: " << cfg.data.root << "/manifest.csv\n";
  return 0;
}

SampleBatch append_batches(const SampleBatch& a, const SampleBatch& b) {
  const Shape4 ia = a.images.shape();
  SampleBatch out;
  out.images = Tensor4::zeros({ia.n + b.images.shape().n, ia.c, ia.h, ia.w});
  out.masks = Tensor4::zeros({ia.n + b.images.shape().n, 1, ia.h, ia.w});
  auto iv = out.images.values_mut();
  auto mv = out.masks.values_mut();
  std::copy_n(a.images.values().data(), a.images.shape().numel(), iv.data());
  std::copy_n(b.images.values().data(), b.images.shape().numel(),
              iv.data() + a.images.shape().numel());
  std::copy_n(a.masks.values().data(), a.masks.shape().numel(), mv.data());
  std::copy_n(b.masks.values().data(), b.masks.shape().numel(),
              mv.data() + a.masks.shape().numel());
  out.ids = a.ids;
  out.ids.insert(out.ids.end(), b.ids.begin(), b.ids.end());
  return out;
}

int cmd_train(const RunConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  SampleBatch train_set = read_split(cfg.data.root, cfg.data.object_class, "train");
  const SampleBatch val_set = read_split(cfg.data.root, cfg.data.object_class, "test");

  if (!cfg.data.augment.empty()) {
    SampleBatch extra = augment(train_set, cfg.data.augment,
                                mix_seed(cfg.data.seed, fnv1a64("augment")));
    for (auto& id : extra.ids) id += "_aug";
    train_set = append_batches(train_set, extra);
  }

  SegNet model(cfg.model);
  model.init_params(cfg.train.seed);

  fs::create_directories(out_dir);
  write_text(str_cat(out_dir, "/resolved.cfg"), cfg.resolved_text());

  const TrainResult result =
      train(model, train_set, val_set, cfg.train, cfg.loss, out_dir);

  const EpochLog& last = result.epochs.back();
  std::cout << "trained " << to_string(cfg.model.variant) << " for "
            << result.epochs.size() << " epochs (" << result.steps << " steps)\n";
  std::cout << "final:  loss " << last.train_loss << ", val IoU "
            << pct2(last.val_iou_mean) << "%\n";
  std::cout << "best:   epoch " << result.best_epoch << ", val IoU "
            << pct2(result.best_val_iou) << "%\n";
  std::cout << "run dir: " << out_dir << "\n";
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint,
             const std::string& split, const std::string& out_dir) {
  const CheckpointInfo info = read_checkpoint_header(checkpoint);
  const ModelConfig mc = ModelConfig::from_canonical_string(info.config_text);
  SegNet model(mc);
  model.load(checkpoint);

  MetricsReport report;
  for (const auto& object_class : cfg.data.classes) {
    SampleBatch batch = read_split(cfg.data.root, object_class, split);
    const EvalStats stats = evaluate(model, batch, cfg.train.batch_size);
    report.classes.push_back({object_class, batch.ids, stats.iou, stats.dice});
  }

  std::cout << report.format_table();
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_text(str_cat(out_dir, "/metrics.csv"), report.to_csv());
    write_text(str_cat(out_dir, "/per_sample.csv"), report.per_sample_csv());
    write_text(str_cat(out_dir, "/resolved.cfg"), cfg.resolved_text());
    std::cout << "wrote " << out_dir << "/metrics.csv and per_sample.csv\n";
  }
  return 0;
}

int cmd_audit(const RunConfig& cfg) {
  ModelConfig recal_cfg = cfg.model;
  recal_cfg.variant = Variant::recal;
  ModelConfig scse_cfg = recal_cfg;
  scse_cfg.variant = Variant::scse;
  ModelConfig base_cfg = recal_cfg;
  base_cfg.variant = Variant::baseline;

  SegNet recal_net(recal_cfg);
  SegNet scse_net(scse_cfg);
  SegNet base_net(base_cfg);

  bool ok = true;
  std::cout << "placement  width  registered  formula(C^2+22C+4)  recount\n";
  const auto widths = recal_cfg.placement_channels();
  const auto active = recal_cfg.active_placements();
  int64_t placement_sum = 0;
  for (size_t i = 0; i < kPlacementNames.size(); ++i) {
    if (!active[i]) continue;
    const int64_t c = widths[i];
    const int64_t registered = recal_net.placement_weight_count(i);
    const int64_t formula = c * c + 22 * c + 4;
    const int64_t recount = recal_net.placement_weight_recount(i);
    placement_sum += registered;
    const bool match = registered == formula && registered == recount;
    ok = ok && match;
    std::printf("%-10s %-6lld %-11lld %-19lld %-8lld %s\n", kPlacementNames[i],
                static_cast<long long>(c), static_cast<long long>(registered),
                static_cast<long long>(formula), static_cast<long long>(recount),
                match ? "ok" : "MISMATCH");
  }

  const int64_t recal_total = recal_net.total_weight_count();
  const int64_t scse_total = scse_net.total_weight_count();
  const int64_t base_total = base_net.total_weight_count();
  ok = ok && recal_total == recal_net.total_weight_recount();
  ok = ok && recal_total == base_total + placement_sum;

  std::cout << "calibration weights: " << placement_sum << "\n";
  std::cout << "totals: recal " << recal_total << ", scse " << scse_total
            << ", baseline " << base_total << "\n";
  std::cout << "recal - baseline = " << recal_total - base_total
            << ", recal - scse = " << recal_total - scse_total << "\n";
  if (!ok) {
    throw VerificationError("audit: registered counts disagree with the formula");
  }
  return 0;
}

// --- gradcheck scopes ---------------------------------------------------

Tensor4 random_tensor(const Shape4& s, Rng& rng, real lo, real hi, bool grad) {
  std::vector<real> v(static_cast<size_t>(s.numel()));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor4::from_data(s, std::move(v), grad);
}

GradCheckResult check_op(const std::string& name, uint64_t seed) {
  Rng rng(mix_seed(seed, fnv1a64(name)));
  GradCheckOptions opts;
  opts.seed = seed;
  opts.max_coords = 160;

  if (name == "conv2d") {
    Tensor4 x = random_tensor({2, 4, 6, 5}, rng, -1, 1, true);
    ConvSpec spec{3, 3, 4, 2, 1, 1, 1, 1, true};
    Tensor4 w = random_tensor(spec.weight_shape(4), rng, -1, 1, true);
    Tensor4 b = random_tensor(spec.bias_shape(), rng, -1, 1, true);
    std::vector<Tensor4> leaves{x, w, b};
    return check_gradients(
        [&] { return sum_all(conv2d(leaves[0], spec, leaves[1], leaves[2])); }, leaves,
        opts);
  }
  if (name == "avg_pool") {
    Tensor4 x = random_tensor({2, 3, 7, 6}, rng, -1, 1, true);
    std::vector<Tensor4> leaves{x};
    return check_gradients([&] { return sum_all(sigmoid(avg_pool(leaves[0], 3, 3))); },
                           leaves, opts);
  }
  if (name == "global_avg_pool") {
    Tensor4 x = random_tensor({2, 5, 4, 4}, rng, -1, 1, true);
    std::vector<Tensor4> leaves{x};
    return check_gradients(
        [&] { return sum_all(sigmoid(global_avg_pool(leaves[0]))); }, leaves, opts);
  }
  if (name == "max_pool2") {
    Tensor4 x = random_tensor({2, 3, 6, 6}, rng, -1, 1, true);
    std::vector<Tensor4> leaves{x};
    return check_gradients([&] { return sum_all(sigmoid(max_pool2(leaves[0]))); },
                           leaves, opts);
  }
  if (name == "bilinear_upsample2") {
    Tensor4 x = random_tensor({2, 3, 4, 5}, rng, -1, 1, true);
    std::vector<Tensor4> leaves{x};
    return check_gradients(
        [&] { return sum_all(sigmoid(bilinear_upsample2(leaves[0]))); }, leaves, opts);
  }
  if (name == "relu") {
    Tensor4 x = random_tensor({2, 3, 5, 5}, rng, -1, 1, true);
    std::vector<Tensor4> leaves{x};
    return check_gradients([&] { return sum_all(sigmoid(relu(leaves[0]))); }, leaves,
                           opts);
  }
  if (name == "sigmoid") {
    Tensor4 x = random_tensor({2, 3, 5, 5}, rng, -3, 3, true);
    std::vector<Tensor4> leaves{x};
    return check_gradients([&] { return sum_all(sigmoid(leaves[0])); }, leaves, opts);
  }
  if (name == "mul") {
    Tensor4 a = random_tensor({2, 4, 5, 5}, rng, -1, 1, true);
    Tensor4 b = random_tensor({2, 1, 5, 5}, rng, -1, 1, true);
    Tensor4 c = random_tensor({2, 4, 1, 1}, rng, -1, 1, true);
    std::vector<Tensor4> leaves{a, b, c};
    return check_gradients(
        [&] {
          return sum_all(sigmoid(elementwise_mul(
              elementwise_mul(leaves[0], leaves[1]), leaves[2])));
        },
        leaves, opts);
  }
  if (name == "concat") {
    Tensor4 a = random_tensor({2, 3, 4, 4}, rng, -1, 1, true);
    Tensor4 b = random_tensor({2, 2, 4, 4}, rng, -1, 1, true);
    std::vector<Tensor4> leaves{a, b};
    return check_gradients(
        [&] { return sum_all(sigmoid(channel_concat(leaves[0], leaves[1]))); }, leaves,
        opts);
  }
  if (name == "interleave") {
    Tensor4 a = random_tensor({2, 3, 4, 4}, rng, -1, 1, true);
    Tensor4 b = random_tensor({2, 3, 4, 4}, rng, -1, 1, true);
    std::vector<Tensor4> leaves{a, b};
    return check_gradients(
        [&] { return sum_all(sigmoid(interleave_channels(leaves[0], leaves[1]))); },
        leaves, opts);
  }
  if (name == "batch_norm") {
    Tensor4 x = random_tensor({2, 3, 5, 5}, rng, -1, 1, true);
    Tensor4 scale = random_tensor({1, 3, 1, 1}, rng, real(0.5), real(1.5), true);
    Tensor4 shift = random_tensor({1, 3, 1, 1}, rng, -1, 1, true);
    std::vector<Tensor4> leaves{x, scale, shift};
    return check_gradients(
        [&] {
          Tensor4 rmean = Tensor4::zeros({1, 3, 1, 1});
          Tensor4 rvar = Tensor4::full({1, 3, 1, 1}, 1);
          return sum_all(sigmoid(
              batch_norm(leaves[0], leaves[1], leaves[2], rmean, rvar, true)));
        },
        leaves, opts);
  }
  if (name == "layer_norm") {
    Tensor4 x = random_tensor({2, 3, 5, 5}, rng, -1, 1, true);
    Tensor4 scale = random_tensor({1, 3, 1, 1}, rng, real(0.5), real(1.5), true);
    Tensor4 shift = random_tensor({1, 3, 1, 1}, rng, -1, 1, true);
    std::vector<Tensor4> leaves{x, scale, shift};
    return check_gradients(
        [&] { return sum_all(sigmoid(layer_norm(leaves[0], leaves[1], leaves[2]))); },
        leaves, opts);
  }
  if (name == "loss") {
    Tensor4 pred = random_tensor({2, 1, 4, 4}, rng, real(0.05), real(0.95), true);
    std::vector<real> tv(32);
    for (auto& t : tv) t = rng.bernoulli(real(0.5)) ? 1 : 0;
    Tensor4 truth = Tensor4::from_data({2, 1, 4, 4}, std::move(tv));
    std::vector<Tensor4> leaves{pred};
    return check_gradients(
        [&] { return bce_log_dice_loss(leaves[0], truth, real(0.8), 1); }, leaves, opts);
  }
  throw UsageError(str_cat("gradcheck: unknown op '", name, "'"));
}

GradCheckResult check_block(const std::string& name, uint64_t seed) {
  Rng rng(mix_seed(seed, fnv1a64(name)));
  GradCheckOptions opts;
  opts.seed = seed;
  opts.max_coords = 140;

  ParamStore store;
  const int64_t c = 4;
  Tensor4 x = random_tensor({2, c, 6, 6}, rng, -1, 1, true);

  std::function<Tensor4(const Tensor4&)> apply;
  if (name == "region") {
    auto p = make_res_block(store, "blk", c);
    apply = [p](const Tensor4& in) { return sum_all(res_block(in, p)); };
  } else if (name == "channel") {
    auto p = make_chs_block(store, "blk", c);
    apply = [p](const Tensor4& in) { return sum_all(sigmoid(chs_block(in, p))); };
  } else if (name == "recal") {
    auto p = make_recal_module(store, "blk", c);
    apply = [p](const Tensor4& in) { return sum_all(sigmoid(recal_module(in, p))); };
  } else if (name == "se") {
    auto p = make_se_block(store, "blk", c);
    apply = [p](const Tensor4& in) { return sum_all(sigmoid(se_block(in, p))); };
  } else if (name == "scse") {
    auto p = make_scse_block(store, "blk", c);
    apply = [p](const Tensor4& in) { return sum_all(sigmoid(scse_block(in, p))); };
  } else {
    throw UsageError(str_cat("gradcheck: unknown block '", name, "'"));
  }

  store.init_kaiming(mix_seed(seed, 1));
  std::vector<Tensor4> leaves{x};
  for (const auto& slot : store.slots()) {
    if (slot.learnable()) leaves.push_back(slot.tensor);
  }
  return check_gradients([&] { return apply(leaves[0]); }, leaves, opts);
}

GradCheckResult check_model(uint64_t seed) {
  ModelConfig mc;
  mc.variant = Variant::recal;
  mc.width_scale = 8;
  mc.input_h = 32;
  mc.input_w = 32;
  SegNet model(mc);
  model.init_params(mix_seed(seed, 2));

  Rng rng(mix_seed(seed, 3));
  Tensor4 images = random_tensor({1, 3, 32, 32}, rng, 0, 1, true);
  std::vector<real> tv(static_cast<size_t>(32 * 32));
  for (auto& t : tv) t = rng.bernoulli(real(0.4)) ? 1 : 0;
  Tensor4 truth = Tensor4::from_data({1, 1, 32, 32}, std::move(tv));

  std::vector<Tensor4> leaves{images};
  for (const auto& slot : model.params().slots()) {
    if (slot.learnable()) leaves.push_back(slot.tensor);
  }

  GradCheckOptions opts;
  opts.seed = seed;
  opts.max_coords = 96;
  opts.rel_tol = real(1e-3);
  return check_gradients(
      [&] {
        return bce_log_dice_loss(model.forward(leaves[0], true), truth, real(0.8), 1);
      },
      leaves, opts);
}

int cmd_gradcheck(const std::string& scope, uint64_t seed) {
  GradCheckResult result;
  if (scope == "model") {
    result = check_model(seed);
  } else if (scope.starts_with("op:")) {
    result = check_op(scope.substr(3), seed);
  } else if (scope.starts_with("block:")) {
    result = check_block(scope.substr(6), seed);
  } else {
    throw UsageError(str_cat("gradcheck: scope '", scope,
                             "' is not op:<name>, block:<name>, or model"));
  }
  std::cout << scope << ": " << result.summary() << "\n";
  if (!result.passed) {
    throw VerificationError(str_cat("gradcheck ", scope, " failed: ", result.detail));
  }
  return 0;
}

int cmd_dump_activations(const RunConfig& cfg, const std::string& checkpoint,
                         const std::string& object_class, const std::string& split,
                         std::string id, const std::vector<std::string>& stages,
                         const std::string& out_dir) {
  static const std::vector<std::string> known = {"E1", "E2", "E3", "E4", "E5",
                                                 "D4", "D3", "D2", "D1"};
  for (const auto& s : stages) {
    if (std::find(known.begin(), known.end(), s) == known.end()) {
      throw UsageError(str_cat("dump-activations: unknown stage '", s,
                               "' (expected E1..E5 or D4..D1)"));
    }
  }

  const CheckpointInfo info = read_checkpoint_header(checkpoint);
  const ModelConfig mc = ModelConfig::from_canonical_string(info.config_text);
  SegNet model(mc);
  model.load(checkpoint);

  if (id.empty()) {
    for (const auto& e : read_manifest(cfg.data.root)) {
      if (e.object_class == object_class && e.split == split) {
        id = e.id;
        break;
      }
    }
    if (id.empty()) {
      throw IoError(str_cat("dump-activations: no samples for class '", object_class,
                            "' split '", split, "' in '", cfg.data.root, "'"));
    }
  }
  const SampleBatch sample =
      read_sample(str_cat(cfg.data.root, "/", object_class, "/", split), id);

  NoGradGuard guard;
  std::vector<std::pair<std::string, Tensor4>> taps;
  model.forward(sample.images, false, &taps);

  fs::create_directories(out_dir);
  for (const auto& stage : stages) {
    const Tensor4* t = nullptr;
    for (const auto& [name, tensor] : taps) {
      if (name == stage) t = &tensor;
    }
    if (!t) throw VerificationError(str_cat("stage ", stage, " was not produced"));

    const Shape4 s = t->shape();
    const real* v = t->values().data();
    std::vector<real> mean(static_cast<size_t>(s.h * s.w), 0);
    for (int64_t c = 0; c < s.c; ++c) {
      for (int64_t i = 0; i < s.h * s.w; ++i) {
        mean[static_cast<size_t>(i)] += v[c * s.h * s.w + i];
      }
    }
    real lo = mean[0], hi = mean[0];
    for (real& m : mean) {
      m /= static_cast<real>(s.c);
      lo = std::min(lo, m);
      hi = std::max(hi, m);
    }
    ImageU8 img;
    img.height = s.h;
    img.width = s.w;
    img.channels = 1;
    img.pixels.resize(static_cast<size_t>(s.h * s.w));
    const real span = hi - lo;
    for (size_t i = 0; i < mean.size(); ++i) {
      const real norm = span > 0 ? (mean[i] - lo) / span : real(0);
      img.pixels[i] = static_cast<uint8_t>(std::lround(norm * 255));
    }
    const std::string path = str_cat(out_dir, "/", stage, ".png");
    write_png(path, img);
    std::cout << "wrote " << path << " (" << s.c << "x" << s.h << "x" << s.w << " -> "
              << s.h << "x" << s.w << ")\n";
  }
  write_text(str_cat(out_dir, "/resolved.cfg"), cfg.resolved_text());
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Region-channel calibrated segmentation on synthetic eye phantoms"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<uint64_t> seed_flag;
  std::optional<std::string> variant_flag;
  std::optional<double> lr_flag;
  std::optional<int64_t> epochs_flag;
  std::optional<int64_t> width_scale_flag;
  std::string gen_out;
  std::string train_out = "runs/train";
  std::string eval_out;
  std::string dump_out = "activations";

  auto add_common = [&](CLI::App* cmd, bool with_model_flags) {
    cmd->add_option("--config", config_path, "key=value config file");
    cmd->add_option("--seed", seed_flag, "seed override for training and data");
    if (with_model_flags) {
      cmd->add_option("--variant", variant_flag, "baseline, recal, scse, or se");
      cmd->add_option("--width-scale", width_scale_flag, "channel width divisor");
    }
  };

  CLI::App* gen = app.add_subcommand("generate-data", "write a synthetic dataset");
  add_common(gen, false);
  gen->add_option("--out", gen_out, "dataset root (overrides data.root)");

  CLI::App* tr = app.add_subcommand("train", "train a variant on one class");
  add_common(tr, true);
  tr->add_option("--lr", lr_flag, "initial learning rate");
  tr->add_option("--epochs", epochs_flag, "number of epochs");
  tr->add_option("--out", train_out, "run directory")->capture_default_str();

  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  add_common(ev, false);
  std::string checkpoint, split = "test";
  ev->add_option("--checkpoint", checkpoint, "checkpoint path")->required();
  ev->add_option("--split", split, "dataset split");
  ev->add_option("--out", eval_out, "directory for metrics CSVs");

  CLI::App* au = app.add_subcommand("audit", "parameter census per placement");
  add_common(au, true);

  CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference verification");
  std::string scope;
  gc->add_option("scope", scope, "op:<name>, block:<name>, or model")->required();
  gc->add_option("--seed", seed_flag, "seed override");

  CLI::App* dump = app.add_subcommand("dump-activations", "stage feature-map images");
  add_common(dump, false);
  std::string dump_class, dump_id;
  std::vector<std::string> stages = {"E5", "D1"};
  dump->add_option("--checkpoint", checkpoint, "checkpoint path")->required();
  dump->add_option("--class", dump_class, "object class (default data.class)");
  dump->add_option("--split", split, "dataset split");
  dump->add_option("--id", dump_id, "sample id (default first in manifest)");
  dump->add_option("--stages", stages, "stage names E1..E5, D4..D1")->delimiter(',');
  dump->add_option("--out", dump_out, "output directory")->capture_default_str();

  try {
    std::vector<const char*> argv;
    argv.push_back("recal");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
      app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e);
      return code == 0 ? 0 : 1;
    }

    RunConfig cfg = load_run_config(config_path);
    if (seed_flag) {
      cfg.train.seed = *seed_flag;
      cfg.data.seed = *seed_flag;
    }
    if (variant_flag) cfg.model.variant = variant_from_string(*variant_flag);
    if (width_scale_flag) cfg.model.width_scale = *width_scale_flag;
    if (lr_flag) cfg.train.lr0 = static_cast<real>(*lr_flag);
    if (epochs_flag) cfg.train.epochs = *epochs_flag;

    if (gen->parsed()) {
      if (!gen_out.empty()) cfg.data.root = gen_out;
      return cmd_generate_data(cfg);
    }
    if (tr->parsed()) return cmd_train(cfg, train_out);
    if (ev->parsed()) return cmd_eval(cfg, checkpoint, split, eval_out);
    if (au->parsed()) return cmd_audit(cfg);
    if (gc->parsed()) return cmd_gradcheck(scope, cfg.train.seed);
    if (dump->parsed()) {
      return cmd_dump_activations(cfg, checkpoint,
                                  dump_class.empty() ? cfg.data.object_class
                                                     : dump_class,
                                  split, dump_id, stages, dump_out);
    }
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return 2;
  } catch (const VerificationError& e) {
    std::cerr << "verification failure: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace recal
