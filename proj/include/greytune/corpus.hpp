#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "greytune/common.hpp"
#include "greytune/searchspace.hpp"

namespace greytune {

/// Identifier of the bundled tokenizer: lowercase, strip punctuation, split
/// on whitespace. Stored in dataset headers so downstream feature values
/// stay attributable.
inline constexpr const char* kTokenizerId = "ws_lowercase_strip_punct_v1";

inline constexpr const char* kQaRatioConvention = "question_over_answer";

inline constexpr int kPairsPerFact = 12;
inline constexpr int kTrainPerFact = 10;

struct QaPair {
  std::string question;
  std::string answer;
  std::string fact_id;

  bool operator==(const QaPair&) const = default;
};

struct QaDataset {
  std::string dataset_id;
  std::string key_topic;
  std::string title;
  std::string tokenizer_id = kTokenizerId;
  std::vector<QaPair> train;
  std::vector<QaPair> val;
  std::vector<QaPair> test;
};

struct MetaFeatures {
  std::int64_t token_size = 0;
  double sample_length = 0.0;
  double qa_length_ratio = 0.0;
  std::int64_t vocab_size = 0;

  bool operator==(const MetaFeatures&) const = default;
};

struct TrainBatchSpec {
  std::int64_t ltrain = 0;
  int batch = kMicroBatchSize;
  int grad_accum = 2;
  std::int64_t bg = 0;
  std::int64_t asc = 0;
};

/// Lowercases, strips punctuation, splits on whitespace (ASCII plus the
/// common Unicode space separators). Empty tokens are dropped.
std::vector<std::string> tokenize(std::string_view text);

std::int64_t count_tokens(std::string_view text);

/// Splits a document into fragments of roughly target_tokens tokens each.
/// Fragments concatenate back to the document byte for byte, none exceeds
/// 1.2 x target_tokens, and cut points prefer paragraph boundaries, then
/// sentence boundaries, then a hard cut after a token.
std::vector<std::string> chunk_text(std::string_view document,
                                    std::int64_t target_tokens = 2000);

struct SplitPairs {
  std::vector<QaPair> train;
  std::vector<QaPair> val;
  std::vector<QaPair> test;
};

/// Partitions the 12 pairs of one fact into 10/1/1 by a seeded shuffle.
SplitPairs split_pairs(const std::vector<QaPair>& pairs, Rng& rng);

/// Four dataset descriptors computed over the training split only.
MetaFeatures compute_meta_features(const QaDataset& dataset);

/// Padding count that tops a training set up to a whole number of
/// effective batches: bg = batch x grad_accum, asc = ceil(ltrain/bg)*bg -
/// ltrain.
std::int64_t augmentation_count(std::int64_t ltrain, int batch,
                                int grad_accum);

TrainBatchSpec make_train_batch_spec(std::int64_t ltrain, int batch,
                                     int grad_accum);

/// Checks the per-fact 10/1/1 split invariant; returns violations.
std::vector<std::string> validate_dataset(const QaDataset& dataset);

void save_dataset(const std::filesystem::path& path, const QaDataset& dataset);

/// Loads and validates a dataset file (header line then one record per
/// pair). Structural problems raise DataError with the line number.
QaDataset load_dataset(const std::filesystem::path& path);

void save_meta_features(
    const std::filesystem::path& path,
    const std::vector<std::pair<std::string, MetaFeatures>>& rows);

/// Loads a meta-features file, checking the invariants (vocab_size multiple
/// of 10, positive lengths and ratio). The optional header record pins the
/// tokenizer and the ratio convention.
std::vector<std::pair<std::string, MetaFeatures>> load_meta_features(
    const std::filesystem::path& path);

json meta_features_to_json(const std::string& dataset_id,
                           const MetaFeatures& mf);

}  // namespace greytune
