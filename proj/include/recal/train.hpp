#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "recal/data.hpp"
#include "recal/model.hpp"
#include "recal/params.hpp"
#include "recal/tensor.hpp"

namespace recal {

struct LossConfig {
  real lambda = real(0.8);
  real sigma = 1;

  void validate() const;
};

/// Weighted sum of mean binary cross-entropy and the negative log of the
/// smoothed soft-Dice ratio. Scalar, differentiable through `pred`.
Tensor4 segmentation_loss(const Tensor4& pred, const Tensor4& truth,
                          const LossConfig& cfg);

enum class ClipMode { norm, value };

const char* to_string(ClipMode mode);
ClipMode clip_mode_from_string(std::string_view name);

struct TrainConfig {
  real lr0 = real(0.005);
  real momentum = real(0.9);
  real clip_threshold = real(0.1);
  ClipMode clip_mode = ClipMode::norm;
  real decay_factor = real(0.8);
  int64_t decay_every = 2;
  int64_t epochs = 30;
  int64_t batch_size = 4;
  uint64_t seed = 1;
  int64_t max_steps = 0;  // 0 means no cap

  void validate() const;
};

/// lr0 * decay_factor^(epoch / decay_every), integer division.
real lr_schedule(int64_t epoch, const TrainConfig& cfg);

/// Overlap metrics on binary masks (0/1 bytes). Both empty counts as a
/// perfect match; exactly one empty counts as a total miss.
real iou_binary(std::span<const uint8_t> pred, std::span<const uint8_t> truth);
real dice_binary(std::span<const uint8_t> pred, std::span<const uint8_t> truth);

/// Per-sample IoU and Dice after thresholding probabilities.
void mask_metrics(const Tensor4& pred_probs, const Tensor4& truth, real threshold,
                  std::vector<real>* iou, std::vector<real>* dice);

real mean_of(std::span<const real> v);
/// Population standard deviation (divide by N).
real std_of(std::span<const real> v);

struct ClassMetrics {
  std::string object_class;
  std::vector<std::string> ids;
  std::vector<real> iou;
  std::vector<real> dice;

  real iou_mean() const;
  real iou_std() const;
  real dice_mean() const;
  real dice_std() const;
};

/// Per-class results plus the overall row: the average of the per-class
/// means (and of the per-class deviations), not a pooled recomputation.
struct MetricsReport {
  std::vector<ClassMetrics> classes;

  real overall_iou_mean() const;
  real overall_iou_std() const;
  real overall_dice_mean() const;
  real overall_dice_std() const;

  /// "mean ± std" as percentages with two decimals, one row per class
  /// plus the overall row.
  std::string format_table() const;
  /// Same rows, machine-readable: class,samples,iou_mean,iou_std,dice_mean,dice_std
  /// with percentage values at two decimals.
  std::string to_csv() const;
  /// Full-precision per-sample rows: class,id,iou,dice.
  std::string per_sample_csv() const;
};

/// Momentum SGD over the learnable slots of a store, with gradient clipping
/// applied before the velocity update. Velocities persist across steps.
class SgdOptimizer {
 public:
  SgdOptimizer(ParamStore& store, const TrainConfig& cfg);

  /// Applies one update and returns the pre-clip global gradient norm.
  real step(real lr);

 private:
  ParamStore* store_;
  real momentum_;
  real clip_threshold_;
  ClipMode clip_mode_;
  std::vector<std::string> names_;
  std::vector<std::vector<real>> velocity_;
};

struct EpochLog {
  int64_t epoch = 0;
  real lr = 0;
  real train_loss = 0;
  real val_iou_mean = 0;
  real val_iou_std = 0;
  real val_dice_mean = 0;
  real val_dice_std = 0;
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  int64_t best_epoch = -1;
  real best_val_iou = -1;
  int64_t steps = 0;

  std::string csv() const;
};

struct EvalStats {
  std::vector<real> iou;
  std::vector<real> dice;

  real iou_mean() const { return mean_of(iou); }
  real iou_std() const { return std_of(iou); }
  real dice_mean() const { return mean_of(dice); }
  real dice_std() const { return std_of(dice); }
};

/// Eval-mode forward over the batch in fixed order, thresholded metrics.
EvalStats evaluate(SegNet& model, const SampleBatch& data, int64_t batch_size,
                   real threshold = real(0.5));

/// Epoch loop with per-epoch shuffling, LR schedule, clipping, and per-epoch
/// validation. When `out_dir` is non-empty, writes epochs.csv plus last.ckpt
/// and best.ckpt (best by validation IoU mean). A non-finite loss or gradient
/// aborts with epoch/step context.
TrainResult train(SegNet& model, const SampleBatch& train_set,
                  const SampleBatch& val_set, const TrainConfig& tcfg,
                  const LossConfig& lcfg, const std::string& out_dir);

}  // namespace recal
