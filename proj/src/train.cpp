#include "recal/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "recal/ops.hpp"
#include "recal/rng.hpp"

namespace recal {

namespace fs = std::filesystem;

void LossConfig::validate() const {
  if (!(lambda >= 0 && lambda <= 1)) {
    throw ConfigError(str_cat("loss: lambda must be in [0,1], got ", lambda));
  }
  if (!(sigma > 0)) {
    throw ConfigError(str_cat("loss: sigma must be positive, got ", sigma));
  }
}

Tensor4 segmentation_loss(const Tensor4& pred, const Tensor4& truth,
                          const LossConfig& cfg) {
  cfg.validate();
  return bce_log_dice_loss(pred, truth, cfg.lambda, cfg.sigma);
}

const char* to_string(ClipMode mode) {
  return mode == ClipMode::norm ? "norm" : "value";
}

ClipMode clip_mode_from_string(std::string_view name) {
  if (name == "norm") return ClipMode::norm;
  if (name == "value") return ClipMode::value;
  throw ConfigError(str_cat("unknown clip mode '", name, "' (expected norm or value)"));
}

void TrainConfig::validate() const {
  if (!(lr0 > 0)) throw ConfigError(str_cat("train: lr0 must be positive, got ", lr0));
  if (!(momentum >= 0 && momentum < 1)) {
    throw ConfigError(str_cat("train: momentum must be in [0,1), got ", momentum));
  }
  if (!(clip_threshold > 0)) {
    throw ConfigError(str_cat("train: clip threshold must be positive, got ",
                              clip_threshold));
  }
  if (!(decay_factor > 0 && decay_factor <= 1)) {
    throw ConfigError(str_cat("train: decay factor must be in (0,1], got ",
                              decay_factor));
  }
  if (decay_every < 1) {
    throw ConfigError(str_cat("train: decay interval must be >= 1, got ", decay_every));
  }
  if (epochs < 1) throw ConfigError(str_cat("train: epochs must be >= 1, got ", epochs));
  if (batch_size < 1) {
    throw ConfigError(str_cat("train: batch size must be >= 1, got ", batch_size));
  }
  if (max_steps < 0) {
    throw ConfigError(str_cat("train: max steps must be >= 0, got ", max_steps));
  }
}

real lr_schedule(int64_t epoch, const TrainConfig& cfg) {
  if (epoch < 0) throw UsageError(str_cat("lr_schedule: negative epoch ", epoch));
  return cfg.lr0 * static_cast<real>(std::pow(static_cast<double>(cfg.decay_factor),
                                              double(epoch / cfg.decay_every)));
}

namespace {

void overlap_counts(std::span<const uint8_t> pred, std::span<const uint8_t> truth,
                    int64_t* inter, int64_t* p_count, int64_t* t_count) {
  if (pred.size() != truth.size()) {
    throw UsageError(str_cat("mask metrics: size mismatch, ", pred.size(), " vs ",
                             truth.size()));
  }
  int64_t i = 0, p = 0, t = 0;
  for (size_t k = 0; k < pred.size(); ++k) {
    const bool pv = pred[k] != 0;
    const bool tv = truth[k] != 0;
    i += pv && tv;
    p += pv;
    t += tv;
  }
  *inter = i;
  *p_count = p;
  *t_count = t;
}

}  // namespace

real iou_binary(std::span<const uint8_t> pred, std::span<const uint8_t> truth) {
  int64_t inter, p, t;
  overlap_counts(pred, truth, &inter, &p, &t);
  if (p == 0 && t == 0) return 1;
  const int64_t uni = p + t - inter;
  return static_cast<real>(inter) / static_cast<real>(uni);
}

real dice_binary(std::span<const uint8_t> pred, std::span<const uint8_t> truth) {
  int64_t inter, p, t;
  overlap_counts(pred, truth, &inter, &p, &t);
  if (p == 0 && t == 0) return 1;
  return 2 * static_cast<real>(inter) / static_cast<real>(p + t);
}

void mask_metrics(const Tensor4& pred_probs, const Tensor4& truth, real threshold,
                  std::vector<real>* iou, std::vector<real>* dice) {
  const Shape4& s = pred_probs.shape();
  if (!(s == truth.shape())) {
    throw UsageError(str_cat("mask metrics: prediction shape ", to_string(s),
                             " does not match truth ", to_string(truth.shape())));
  }
  const int64_t plane = s.c * s.h * s.w;
  const real* pv = pred_probs.values().data();
  const real* tv = truth.values().data();
  std::vector<uint8_t> pb(static_cast<size_t>(plane));
  std::vector<uint8_t> tb(static_cast<size_t>(plane));
  for (int64_t n = 0; n < s.n; ++n) {
    for (int64_t i = 0; i < plane; ++i) {
      pb[static_cast<size_t>(i)] = pv[n * plane + i] >= threshold ? 1 : 0;
      tb[static_cast<size_t>(i)] = tv[n * plane + i] != 0 ? 1 : 0;
    }
    if (iou) iou->push_back(iou_binary(pb, tb));
    if (dice) dice->push_back(dice_binary(pb, tb));
  }
}

real mean_of(std::span<const real> v) {
  if (v.empty()) return 0;
  real s = 0;
  for (real x : v) s += x;
  return s / static_cast<real>(v.size());
}

real std_of(std::span<const real> v) {
  if (v.empty()) return 0;
  const real m = mean_of(v);
  real s = 0;
  for (real x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<real>(v.size()));
}

real ClassMetrics::iou_mean() const { return mean_of(iou); }
real ClassMetrics::iou_std() const { return std_of(iou); }
real ClassMetrics::dice_mean() const { return mean_of(dice); }
real ClassMetrics::dice_std() const { return std_of(dice); }

namespace {

real class_average(const std::vector<ClassMetrics>& classes,
                   real (ClassMetrics::*field)() const) {
  if (classes.empty()) return 0;
  real s = 0;
  for (const auto& c : classes) s += (c.*field)();
  return s / static_cast<real>(classes.size());
}

std::string pct2(real fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", static_cast<double>(fraction) * 100);
  return buf;
}

std::string g17(real v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", static_cast<double>(v));
  return buf;
}

std::string pad_right(std::string s, size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

}  // namespace

real MetricsReport::overall_iou_mean() const {
  return class_average(classes, &ClassMetrics::iou_mean);
}
real MetricsReport::overall_iou_std() const {
  return class_average(classes, &ClassMetrics::iou_std);
}
real MetricsReport::overall_dice_mean() const {
  return class_average(classes, &ClassMetrics::dice_mean);
}
real MetricsReport::overall_dice_std() const {
  return class_average(classes, &ClassMetrics::dice_std);
}

std::string MetricsReport::format_table() const {
  std::string out = pad_right("class", 14) + pad_right("samples", 9) +
                    pad_right("IoU (%)", 17) + "Dice (%)\n";
  auto row = [&](const std::string& name, size_t samples, real im, real is, real dm,
                 real ds) {
    out += pad_right(name, 14);
    out += pad_right(std::to_string(samples), 9);
    out += pad_right(str_cat(pct2(im), " ", "+-", " ", pct2(is)), 17);
    out += str_cat(pct2(dm), " ", "+-", " ", pct2(ds), "\n");
  };
  size_t total = 0;
  for (const auto& c : classes) {
    total += c.iou.size();
    row(c.object_class, c.iou.size(), c.iou_mean(), c.iou_std(), c.dice_mean(),
        c.dice_std());
  }
  row("overall", total, overall_iou_mean(), overall_iou_std(), overall_dice_mean(),
      overall_dice_std());
  return out;
}

std::string MetricsReport::to_csv() const {
  std::string out = "class,samples,iou_mean,iou_std,dice_mean,dice_std\n";
  size_t total = 0;
  for (const auto& c : classes) {
    total += c.iou.size();
    out += str_cat(c.object_class, ",", c.iou.size(), ",", pct2(c.iou_mean()), ",",
                   pct2(c.iou_std()), ",", pct2(c.dice_mean()), ",", pct2(c.dice_std()),
                   "\n");
  }
  out += str_cat("overall,", total, ",", pct2(overall_iou_mean()), ",",
                 pct2(overall_iou_std()), ",", pct2(overall_dice_mean()), ",",
                 pct2(overall_dice_std()), "\n");
  return out;
}

std::string MetricsReport::per_sample_csv() const {
  std::string out = "class,id,iou,dice\n";
  for (const auto& c : classes) {
    for (size_t i = 0; i < c.iou.size(); ++i) {
      const std::string id =
          i < c.ids.size() ? c.ids[i] : std::to_string(i);
      out += str_cat(c.object_class, ",", id, ",", g17(c.iou[i]), ",", g17(c.dice[i]),
                     "\n");
    }
  }
  return out;
}

SgdOptimizer::SgdOptimizer(ParamStore& store, const TrainConfig& cfg)
    : store_(&store),
      momentum_(cfg.momentum),
      clip_threshold_(cfg.clip_threshold),
      clip_mode_(cfg.clip_mode) {
  for (const auto& slot : store.slots()) {
    if (!slot.learnable()) continue;
    names_.push_back(slot.name);
    velocity_.emplace_back(static_cast<size_t>(slot.tensor.shape().numel()), real(0));
  }
}

real SgdOptimizer::step(real lr) {
  real norm_sq = 0;
  for (const auto& name : names_) {
    Tensor4 t = store_->at(name);
    if (!t.has_grad()) {
      throw UsageError(str_cat("sgd: slot '", name,
                               "' has no gradient; run backward before stepping"));
    }
    const auto g = t.grad();
    for (size_t i = 0; i < g.size(); ++i) {
      if (!std::isfinite(g[i])) {
        throw NumericError(str_cat("sgd: gradient for slot '", name,
                                   "' is not finite at element ", i));
      }
      norm_sq += g[i] * g[i];
    }
  }
  const real norm = std::sqrt(norm_sq);
  const real scale =
      (clip_mode_ == ClipMode::norm && norm > clip_threshold_) ? clip_threshold_ / norm
                                                               : real(1);

  for (size_t s = 0; s < names_.size(); ++s) {
    Tensor4 t = store_->at(names_[s]);
    const auto g = t.grad();
    auto values = t.values_mut();
    auto& vel = velocity_[s];
    for (size_t i = 0; i < g.size(); ++i) {
      real gi = g[i] * scale;
      if (clip_mode_ == ClipMode::value) {
        gi = std::clamp(gi, -clip_threshold_, clip_threshold_);
      }
      vel[i] = momentum_ * vel[i] + gi;
      values[i] -= lr * vel[i];
    }
  }
  return norm;
}

std::string TrainResult::csv() const {
  std::string out = "epoch,lr,train_loss,val_iou_mean,val_iou_std,val_dice_mean,val_dice_std\n";
  for (const auto& e : epochs) {
    out += str_cat(e.epoch, ",", g17(e.lr), ",", g17(e.train_loss), ",",
                   g17(e.val_iou_mean), ",", g17(e.val_iou_std), ",",
                   g17(e.val_dice_mean), ",", g17(e.val_dice_std), "\n");
  }
  return out;
}

namespace {

void gather_batch(const SampleBatch& data, std::span<const int64_t> idx,
                  Tensor4* images, Tensor4* masks) {
  const Shape4& is = data.images.shape();
  const Shape4& ms = data.masks.shape();
  const int64_t n = static_cast<int64_t>(idx.size());
  std::vector<real> iv(static_cast<size_t>(n * is.c * is.h * is.w));
  std::vector<real> mv(static_cast<size_t>(n * ms.c * ms.h * ms.w));
  const int64_t istride = is.c * is.h * is.w;
  const int64_t mstride = ms.c * ms.h * ms.w;
  for (int64_t k = 0; k < n; ++k) {
    std::copy_n(data.images.values().data() + idx[k] * istride, istride,
                iv.data() + k * istride);
    std::copy_n(data.masks.values().data() + idx[k] * mstride, mstride,
                mv.data() + k * mstride);
  }
  *images = Tensor4::from_data({n, is.c, is.h, is.w}, std::move(iv));
  *masks = Tensor4::from_data({n, ms.c, ms.h, ms.w}, std::move(mv));
}

}  // namespace

EvalStats evaluate(SegNet& model, const SampleBatch& data, int64_t batch_size,
                   real threshold) {
  if (data.count() < 1) throw ConfigError("evaluate: dataset is empty");
  if (batch_size < 1) {
    throw UsageError(str_cat("evaluate: batch size must be >= 1, got ", batch_size));
  }
  NoGradGuard guard;
  EvalStats stats;
  for (int64_t start = 0; start < data.count(); start += batch_size) {
    const int64_t stop = std::min(data.count(), start + batch_size);
    std::vector<int64_t> idx(static_cast<size_t>(stop - start));
    std::iota(idx.begin(), idx.end(), start);
    Tensor4 images, masks;
    gather_batch(data, idx, &images, &masks);
    const Tensor4 pred = model.forward(images, false);
    mask_metrics(pred, masks, threshold, &stats.iou, &stats.dice);
  }
  return stats;
}

TrainResult train(SegNet& model, const SampleBatch& train_set,
                  const SampleBatch& val_set, const TrainConfig& tcfg,
                  const LossConfig& lcfg, const std::string& out_dir) {
  tcfg.validate();
  lcfg.validate();
  if (train_set.count() < 1) throw ConfigError("train: training set is empty");
  if (val_set.count() < 1) throw ConfigError("train: validation set is empty");

  SgdOptimizer opt(model.params(), tcfg);
  TrainResult result;
  if (!out_dir.empty()) fs::create_directories(out_dir);

  bool stop = false;
  for (int64_t epoch = 0; epoch < tcfg.epochs && !stop; ++epoch) {
    const real lr = lr_schedule(epoch, tcfg);

    std::vector<int64_t> order(static_cast<size_t>(train_set.count()));
    std::iota(order.begin(), order.end(), int64_t(0));
    Rng shuffle_rng(mix_seed(tcfg.seed, static_cast<uint64_t>(epoch)));
    for (size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng.uniform_index(i)]);
    }

    real loss_sum = 0;
    int64_t seen = 0;
    for (size_t start = 0; start < order.size() && !stop; start += tcfg.batch_size) {
      const size_t end = std::min(order.size(), start + tcfg.batch_size);
      std::span<const int64_t> idx(order.data() + start, end - start);
      Tensor4 images, masks;
      gather_batch(train_set, idx, &images, &masks);

      model.params().zero_grads();
      const Tensor4 pred = model.forward(images, true);
      Tensor4 loss = segmentation_loss(pred, masks, lcfg);
      const real loss_value = loss.scalar_value();
      if (!std::isfinite(loss_value)) {
        throw NumericError(str_cat("train: loss is not finite (", loss_value,
                                   ") at epoch ", epoch, " step ", result.steps));
      }
      loss.backward();
      try {
        opt.step(lr);
      } catch (const NumericError& e) {
        throw NumericError(str_cat("train: epoch ", epoch, " step ", result.steps, ": ",
                                   e.what()));
      }
      loss_sum += loss_value * static_cast<real>(idx.size());
      seen += static_cast<int64_t>(idx.size());
      ++result.steps;
      if (tcfg.max_steps > 0 && result.steps >= tcfg.max_steps) stop = true;
    }

    const EvalStats val = evaluate(model, val_set, tcfg.batch_size);
    EpochLog log;
    log.epoch = epoch;
    log.lr = lr;
    log.train_loss = loss_sum / static_cast<real>(seen);
    log.val_iou_mean = val.iou_mean();
    log.val_iou_std = val.iou_std();
    log.val_dice_mean = val.dice_mean();
    log.val_dice_std = val.dice_std();
    result.epochs.push_back(log);

    if (!out_dir.empty()) model.save(str_cat(out_dir, "/last.ckpt"));
    if (log.val_iou_mean > result.best_val_iou) {
      result.best_val_iou = log.val_iou_mean;
      result.best_epoch = epoch;
      if (!out_dir.empty()) model.save(str_cat(out_dir, "/best.ckpt"));
    }
    if (!out_dir.empty()) {
      std::ofstream csv(str_cat(out_dir, "/epochs.csv"), std::ios::trunc);
      if (!csv) throw IoError(str_cat("train: cannot write '", out_dir, "/epochs.csv'"));
      csv << result.csv();
    }
  }
  return result;
}

}  // namespace recal
