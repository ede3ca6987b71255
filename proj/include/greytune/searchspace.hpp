#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "greytune/common.hpp"

namespace greytune {

using json = nlohmann::json;

enum class Optimizer { AdamW, AdamCPR };
enum class LoraTarget { Qkv, OutputProj, AllLinear };

inline constexpr std::array<double, 7> kLog10LrGrid = {-6.0, -5.5, -5.0, -4.5,
                                                       -4.0, -3.5, -3.0};
inline constexpr std::array<double, 6> kLog10WdGrid = {-0.5, -1.0, -1.5,
                                                       -2.0, -3.0, -4.0};
inline constexpr std::array<int, 3> kKappaMultiplierGrid = {1, 2, 4};
inline constexpr std::array<int, 5> kWarmupPctGrid = {10, 20, 30, 40, 50};
inline constexpr std::array<double, 3> kDecayFactorGrid = {0.0, 0.1, 0.01};
inline constexpr std::array<LoraTarget, 3> kLoraTargetGrid = {
    LoraTarget::Qkv, LoraTarget::OutputProj, LoraTarget::AllLinear};
inline constexpr std::array<int, 4> kLoraRankGrid = {8, 16, 32, 64};
inline constexpr std::array<int, 2> kLoraAlphaGrid = {16, 32};
inline constexpr std::array<double, 2> kLoraDropoutGrid = {0.0, 0.1};
inline constexpr std::array<int, 3> kGradAccumGrid = {2, 4, 8};

inline constexpr int kMicroBatchSize = 32;
inline constexpr int kMaxEpochs = 10;
inline constexpr const char* kSchedule = "cosine";
inline constexpr const char* kKappaInitMethod = "warm_start";

/// One point in the finetuning pipeline search space. The two optimizer
/// branches are conditional: log10_weight_decay is meaningful only under
/// AdamW, kappa_warmup_multiplier only under AdamCPR. The schedule
/// ("cosine") and the kappa init method ("warm_start") are fixed and not
/// stored per config.
struct PipelineConfig {
  Optimizer optimizer = Optimizer::AdamW;
  double log10_lr = -6.0;
  std::optional<double> log10_weight_decay;
  std::optional<int> kappa_warmup_multiplier;
  int warmup_steps_pct = 10;
  double decay_factor = 0.0;
  LoraTarget lora_target = LoraTarget::AllLinear;
  int lora_rank = 8;
  int lora_alpha = 16;
  double lora_dropout = 0.0;
  int grad_accum = 2;
  bool return_assistant_mask = false;

  bool operator==(const PipelineConfig&) const = default;
};

// Fixed-width numeric embedding. Conditional values are imputed with 0 and
// paired with an activity flag so the two optimizer branches stay
// distinguishable. Layout:
//   [0]  optimizer == AdamW
//   [1]  optimizer == AdamCPR
//   [2]  log10_lr
//   [3]  log10_weight_decay (0 when inactive)
//   [4]  weight-decay activity flag
//   [5]  kappa_warmup_multiplier / 4 (0 when inactive)
//   [6]  kappa activity flag
//   [7]  warmup_steps_pct / 100
//   [8..10]  decay_factor one-hot over {0, 0.1, 0.01}
//   [11..13] lora_target one-hot over {qkv, o, all-linear}
//   [14] log2(lora_rank) / 6
//   [15] lora_alpha / 32
//   [16] lora_dropout * 10
//   [17] log2(grad_accum) / 3
//   [18] return_assistant_mask
// Every coordinate lies in [-6, 1].
inline constexpr int kEncodedDim = 19;
using EncodedConfig = std::array<double, kEncodedDim>;

PipelineConfig default_config();

/// Uniform draw from the space: optimizer first, then the matching
/// conditional branch, then the unconditional fields.
PipelineConfig sample_config(Rng& rng);

/// Returns human-readable violations, empty for a valid config. Never
/// throws on bad values; that is the caller's decision.
std::vector<std::string> validate(const PipelineConfig& config);

inline bool is_valid(const PipelineConfig& config) {
  return validate(config).empty();
}

/// Resamples exactly one uniformly chosen field to a different value. When
/// the optimizer field is chosen the conditional branch is redrawn for the
/// new optimizer, so the result is always valid.
PipelineConfig mutate(const PipelineConfig& config, Rng& rng);

/// Throws DataError for invalid configs, except the legacy decay factor
/// 1.0 which external records may carry; it encodes as an all-zero decay
/// one-hot.
EncodedConfig encode(const PipelineConfig& config);

/// Number of differing field slots. The two conditional values count as
/// slots of their own (present-vs-absent differs), so an optimizer flip is
/// distance 3 and any other single-field change is distance 1.
int hamming_distance(const PipelineConfig& a, const PipelineConfig& b);

/// Flat record with fixed keys. Learning rate and weight decay are written
/// in power-of-ten notation ("1e-5.5"); batch_size is the effective batch
/// (micro-batch 32 times grad_accum); inactive conditional keys are
/// omitted.
json serialize_config(const PipelineConfig& config);

struct ParsedConfig {
  PipelineConfig config;
  /// Accepted-with-warning notes plus any domain violations detected while
  /// reading, e.g. a decay factor of 1.0 from an older record.
  std::vector<std::string> flags;
};

/// Inverse of serialize_config, tolerant of external records: numeric lr/wd
/// values, "all_linear" spelling, null or "nan" for absent conditionals,
/// stringified booleans. Malformed structure (missing keys, unparseable
/// values, batch size not a multiple of 32) throws DataError; out-of-grid
/// values are reported via flags instead. Unknown keys throw unless
/// ignore_extra_keys is set.
ParsedConfig parse_config(const json& record, bool ignore_extra_keys = false);

/// Canonical string for use as a map key; equal configs agree byte for byte.
std::string config_key(const PipelineConfig& config);

std::string to_string(Optimizer o);
std::string to_string(LoraTarget t);

}  // namespace greytune
