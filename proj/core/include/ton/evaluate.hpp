#pragma once

// Greedy evaluation on held-out tasks.

#include <cstdint>
#include <optional>
#include <string>

#include "ton/policy.hpp"
#include "ton/rewards.hpp"
#include "ton/tasks.hpp"

namespace ton {

struct EvalOptions {
  Difficulty difficulty;
  bool hybrid = false;
  int max_completion = 64;
  RewardConfig reward;  // theta doubles as the exact-match click tolerance
};

struct EvalReport {
  TaskKind kind = TaskKind::kCount;
  int n_examples = 0;  // tasks, or episodes for GridNav
  std::optional<double> accuracy;      // Count and ChainArith
  std::optional<double> type_acc;      // GridNav, per step
  std::optional<double> exact_acc;     // GridNav, per step
  std::optional<double> task_success;  // GridNav, per episode
  int n_steps = 0;                     // generated responses
  double mean_output_len = 0.0;        // tokens per response
  double mean_task_output_len = 0.0;   // tokens per task (episode total for GridNav)
  double skip_ratio = 0.0;
  double format_rate = 0.0;

  bool operator==(const EvalReport&) const = default;
};

// Greedy decoding on tasks generated from seed, seed+1, ... For GridNav each
// seed starts an episode that runs until success, STOP or the step budget;
// an unreadable response wastes a step.
EvalReport evaluate(const PolicyParams& params, TaskKind kind, int n, std::uint64_t seed,
                    const EvalOptions& options = {});

std::string to_json(const EvalReport& report);
// Throws std::runtime_error on schema mismatch.
EvalReport eval_report_from_json(const std::string& text);

}  // namespace ton
