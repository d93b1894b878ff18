#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "recal/data.hpp"
#include "recal/model.hpp"
#include "recal/train.hpp"

namespace recal {

/// Dataset generation and selection settings (the data.* config section).
struct DataConfig {
  std::string root = "data";
  std::vector<std::string> classes = {"pupil", "iris", "lens", "instrument"};
  std::string object_class = "pupil";  // class a training run segments
  int64_t height = 64;
  int64_t width = 64;
  int64_t train_count = 16;
  int64_t test_count = 8;
  real noise_sigma = real(0.02);
  uint64_t seed = 1;
  /// Ops applied to a seeded extra copy of the training split before training.
  std::vector<AugmentOp> augment;

  void validate() const;
};

/// Everything a run needs, resolved from defaults, the RECAL_SEED fallback,
/// a key=value config file, and flag overrides, in that order.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  LossConfig loss;
  DataConfig data;

  /// Applies one `section.key = value` setting; unknown keys are rejected.
  void apply(std::string_view key, std::string_view value);
  /// Echo of every setting in a fixed order; reparsing it reproduces *this.
  std::string resolved_text() const;
  void validate() const;
};

/// Parses key=value lines ('#' comments and blank lines skipped). `origin`
/// names the source in error messages.
std::vector<std::pair<std::string, std::string>> parse_kv_text(std::string_view text,
                                                               std::string_view origin);

/// Defaults, then RECAL_SEED (if set, as train and data seed fallback), then
/// the file when `path` is non-empty.
RunConfig load_run_config(const std::string& path);

}  // namespace recal
