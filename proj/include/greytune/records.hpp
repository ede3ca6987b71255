#pragma once

#include <string>
#include <vector>

#include "greytune/searchspace.hpp"

namespace greytune {

/// One observed point on a finetuning curve: scores after `epoch` epochs and
/// the cumulative wall-clock seconds spent to reach it.
struct CurvePoint {
  int epoch = 0;
  double val_score = 0.0;
  double test_score = 0.0;
  double cum_seconds = 0.0;
};

/// A completed (possibly truncated) finetuning run of one pipeline config on
/// one dataset. Epochs are contiguous from 1 and cum_seconds is strictly
/// increasing.
struct RunRecord {
  std::string dataset_id;
  PipelineConfig config;
  std::vector<CurvePoint> curve;
};

/// Throws DataError describing the first violated invariant.
void validate_run_record(const RunRecord& record);

/// "dataset_id | config_key" — stable identifier used in error messages.
std::string record_name(const RunRecord& record);

}  // namespace greytune
