#pragma once

// Group-relative policy optimization: sample a group of completions per
// prompt, normalize their rewards within the group, and take a clipped
// policy-gradient step with a KL penalty toward a frozen reference.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "ton/metrics.hpp"
#include "ton/policy.hpp"
#include "ton/rewards.hpp"
#include "ton/sft.hpp"
#include "ton/tasks.hpp"

namespace ton {

struct GrpoConfig {
  int group_size = 8;
  double clip_eps = 0.2;
  double kl_coef = 0.04;
  OptimizerConfig optimizer;
  int steps = 200;
  double temperature = 1.0;
  int max_completion = 48;
  std::uint64_t seed = 0;
  int prompts_per_step = 1;  // gradients summed over these prompts
  bool length_normalize = true;
  RewardConfig reward;
  int collapse_window = 100;  // abort after this many zero-reward steps in a row

  void validate() const;
};

struct GroupRollout {
  TaskInstance task;
  std::vector<Completion> completions;
  std::vector<ParseResult> parses;
  std::vector<RewardBreakdown> breakdowns;
  std::vector<double> rewards;
  std::vector<double> advantages;
  std::vector<std::vector<double>> old_logprobs;
  std::vector<std::vector<double>> ref_logprobs;
};

// (r - mean) / std with the population std; all zeros when std < 1e-8.
// Throws std::invalid_argument for fewer than two rewards.
std::vector<double> advantages(std::span<const double> rewards);

// min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A).
double clipped_surrogate(double ratio, double eps, double advantage);
// ratio - log(ratio) - 1 for ratio = exp(log_ratio); nonnegative.
double kl_estimator(double log_ratio);

// Completion i is sampled from pi_old with seed + i.
GroupRollout rollout_group(const PolicyParams& pi_old, const PolicyParams& pi_ref,
                           const TaskInstance& task, const GrpoConfig& cfg, std::uint64_t seed);

struct LossDiagnostics {
  double kl_mean = 0.0;            // mean over completions of the per-token mean
  double max_abs_log_ratio = 0.0;  // |log pi_theta - log pi_old|
  int worst_completion = -1;
};

// -(1/N) sum_i w_i sum_t (surrogate_it - kl_coef * k_it), with w_i = 1/|o_i|
// under length normalization and 1 otherwise. Throws TrainingAbort with
// diagnostics on a non-finite value.
Var grpo_loss(Tape& tape, PolicyParams& params, const GroupRollout& group, const GrpoConfig& cfg,
              LossDiagnostics* diagnostics = nullptr);

using TaskStream = std::function<TaskInstance(int step, int index)>;
using StepObserver = std::function<void(const StepRecord&, std::span<const GroupRollout>)>;

struct GrpoResult {
  std::vector<StepRecord> steps;
};

// The reference policy is a snapshot of params at entry; the sampling
// policy is refreshed before every step. Throws TrainingAbort on a
// non-finite loss or a reward collapse; observer runs after every step.
GrpoResult grpo_train(PolicyParams& params, const TaskStream& tasks, const GrpoConfig& cfg,
                      const StepObserver& observer = {});

}  // namespace ton
