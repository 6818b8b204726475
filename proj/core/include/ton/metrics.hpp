#pragma once

// Per-step training statistics and the skip-ratio metric.

#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "ton/grammar.hpp"

namespace ton {

struct StepRecord {
  int step = 0;
  double reward_mean = 0.0;
  double reward_std = 0.0;  // population
  double skip_ratio = 0.0;
  double completion_len_mean = 0.0;
  std::optional<double> think_len_mean;  // think-mode completions only
  double kl_mean = 0.0;
  double format_rate = 0.0;

  bool operator==(const StepRecord&) const = default;
};

// Fraction of responses that parsed as skips; parse failures count as
// non-skip. Empty input gives 0.
double skip_ratio(std::span<const ParseResult> responses);

// Summarizes one step from flat per-completion data (all spans equal length).
StepRecord make_step_record(int step, std::span<const double> rewards,
                            std::span<const ParseResult> responses,
                            std::span<const std::size_t> lengths, double kl_mean);

// One JSON object per line, field names as in StepRecord; think_len_mean
// is null when absent.
std::string to_json_line(const StepRecord& record);
// Throws std::runtime_error on schema mismatch.
StepRecord step_record_from_json(std::string_view line);

}  // namespace ton
