#pragma once

// Cross-run comparison: an aligned per-step CSV and a summary JSON.

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ton/metrics.hpp"

namespace ton {

// Raised for missing or malformed run artifacts; the message names the file.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunData {
  std::string label;  // directory name, made unique across a report
  std::string summary_json;
  std::vector<StepRecord> steps;
};

// Reads steps.jsonl and summary.json from a run directory.
RunData load_run(const std::string& run_dir);

struct ReportOptions {
  int moving_average = 0;  // trailing window over logged values, 0 or 1 disables
};

struct ReportOutput {
  // step,<label>.reward_mean,<label>.skip_ratio,<label>.completion_len_mean,...
  // Runs shorter than the longest are padded with "null".
  std::string csv;
  // {label: {arm, task, status, final_accuracy, final_length,
  //          final_skip_ratio, wall_time}}
  std::string summary_json;
};

// Throws std::invalid_argument for an empty run list.
ReportOutput report(std::span<const RunData> runs, const ReportOptions& options = {});
ReportOutput report(std::span<const std::string> run_dirs, const ReportOptions& options = {});

// Trailing mean over up to `window` values ending at each index.
std::vector<double> moving_average(std::span<const double> values, int window);

}  // namespace ton
