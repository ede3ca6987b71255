#include "greytune/records.hpp"

#include "greytune/common.hpp"

namespace greytune {

std::string record_name(const RunRecord& record) {
  return record.dataset_id + " | " + config_key(record.config);
}

void validate_run_record(const RunRecord& record) {
  if (record.dataset_id.empty()) {
    throw DataError("run record has empty dataset_id");
  }
  if (const auto violations = validate(record.config); !violations.empty()) {
    throw DataError(record_name(record) + ": invalid config: " + violations[0]);
  }
  if (record.curve.empty() || record.curve.size() > 10) {
    throw DataError(record_name(record) + ": curve length must be 1..10, got " +
                    std::to_string(record.curve.size()));
  }
  double prev_seconds = 0.0;
  for (std::size_t i = 0; i < record.curve.size(); ++i) {
    const CurvePoint& p = record.curve[i];
    if (p.epoch != static_cast<int>(i) + 1) {
      throw DataError(record_name(record) +
                      ": epochs must be contiguous from 1, got epoch " +
                      std::to_string(p.epoch) + " at position " +
                      std::to_string(i + 1));
    }
    if (!(p.val_score >= 0.0 && p.val_score <= 1.0) ||
        !(p.test_score >= 0.0 && p.test_score <= 1.0)) {
      throw DataError(record_name(record) + ": scores at epoch " +
                      std::to_string(p.epoch) + " outside [0,1]");
    }
    if (!(p.cum_seconds > prev_seconds)) {
      throw DataError(record_name(record) +
                      ": cum_seconds not strictly increasing at epoch " +
                      std::to_string(p.epoch));
    }
    prev_seconds = p.cum_seconds;
  }
}

}  // namespace greytune
