#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "recal/tensor.hpp"

namespace recal {

/// What a registered array is, for census filtering and initialization.
/// The weight census counts conv_weight slots only: biases and normalization
/// parameters are excluded from the published per-module arithmetic.
enum class ParamKind { conv_weight, conv_bias, norm_scale, norm_shift, running_stat };

const char* to_string(ParamKind k);

struct ParamSlot {
  std::string name;
  ParamKind kind;
  Tensor4 tensor;

  bool learnable() const { return kind != ParamKind::running_stat; }
};

/// Named registry of every learnable array and statistics buffer of a model.
/// Slots are handles: tensors are shared with the layers that use them.
class ParamStore {
 public:
  /// Registers a slot and returns its tensor (requires_grad set for
  /// learnable kinds). A name may be registered exactly once.
  Tensor4 declare(std::string name, ParamKind kind, const Shape4& shape);

  bool contains(std::string_view name) const;
  Tensor4 at(std::string_view name) const;
  const std::vector<ParamSlot>& slots() const { return slots_; }

  /// Count of conv weights (kind == conv_weight) whose name starts with
  /// `prefix`. Kernel-only accounting, biases and norms excluded.
  int64_t weight_census(std::string_view prefix = {}) const;

  /// Count of all learnable values (everything but running stats) under
  /// `prefix`, biases and norm parameters included.
  int64_t learnable_census(std::string_view prefix = {}) const;

  /// Deterministic initialization: conv weights get Kaiming fan-in normals
  /// (fan_in = per-output receptive volume), biases and norm shifts zero,
  /// norm scales one. Each slot draws from its own stream keyed by name, so
  /// registration order does not matter. Running stats are left untouched.
  void init_kaiming(uint64_t seed);

  void zero_grads();

 private:
  std::vector<ParamSlot> slots_;
  std::unordered_map<std::string, size_t> index_;
};

/// Checkpoint header contents (without the arrays).
struct CheckpointInfo {
  uint32_t version = 0;
  uint64_t config_digest = 0;
  std::string config_text;
};

/// Writes all slots (running stats included) with a versioned header carrying
/// the model config digest and its canonical text. Arrays are stored as
/// little-endian 64-bit floats regardless of the build's `real` type.
void save_checkpoint(const std::string& path, const ParamStore& store,
                     uint64_t config_digest, std::string_view config_text);

/// Reads just the header; IoError on malformed files, with the byte offset.
CheckpointInfo read_checkpoint_header(const std::string& path);

/// Loads values into an already-built store. Throws ConfigError when the
/// stored digest differs from `expected_digest` or slots do not line up.
void load_checkpoint(const std::string& path, ParamStore& store,
                     uint64_t expected_digest);

}  // namespace recal
