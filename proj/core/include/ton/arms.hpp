#pragma once

// Experiment arms: supervised warm start followed by GRPO, with every
// artifact written to a run directory.
//
// Run directory layout:
//   config.json          resolved ArmConfig
//   vocab.json           token name -> id
//   corpus.jsonl         warm-start corpus (with probe results when used)
//   sft_report.json      per-epoch loss and realized skip fraction
//   sft.ckpt.json        policy after the warm start
//   steps.jsonl          one StepRecord per GRPO step, flushed per line
//   step_rewards.jsonl   raw per-completion rewards of every step
//   eval_sft.json, eval_step_<k>.json, eval_final.json
//   final.ckpt.json      policy after GRPO
//   summary.json         headline numbers and wall time; written last, also
//                        on abort

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ton/evaluate.hpp"
#include "ton/grpo.hpp"
#include "ton/sft.hpp"

namespace ton {

enum class ArmKind { kVanillaGrpo, kHybridPrompt, kTon, kTonSweep, kDifficultyAware };

std::string_view to_string(ArmKind arm);
// Throws std::invalid_argument.
ArmKind arm_kind_from_string(std::string_view name);

struct ArmSeeds {
  std::uint64_t init = 1;       // policy initialization
  std::uint64_t data = 1000;    // warm-start corpus task seeds
  std::uint64_t sft = 2;        // shuffling and dropout draws
  std::uint64_t grpo = 5;       // rollout sampling
  std::uint64_t tasks = 50000;  // GRPO prompt stream
  std::uint64_t eval = 900000;  // held-out evaluation tasks
  bool operator==(const ArmSeeds&) const = default;
};

struct ArmConfig {
  ArmKind arm = ArmKind::kTon;
  TaskKind task = TaskKind::kCount;
  Difficulty difficulty;
  PolicyConfig policy;
  int corpus_size = 4000;
  SftConfig sft;
  int probe_epochs = 4;  // difficulty-aware arm: warm start of the probe policy
  GrpoConfig grpo;
  int eval_n = 200;
  int eval_every = 0;  // extra evaluations every k GRPO steps, 0 disables
  int eval_max_completion = 64;
  int final_window = 20;  // steps averaged for the training-curve summary
  ArmSeeds seeds;
  std::string out_dir = "runs/arm";

  bool hybrid() const { return arm == ArmKind::kHybridPrompt; }
  // Enforces the arm rules: vanilla and hybrid train without dropout, the
  // sweep uses p in {0.2, 0.5, 0.8}, only the difficulty-aware arm uses the
  // difficulty-aware dropout mode. Throws std::invalid_argument.
  void validate() const;
};

// Defaults for an arm; vanilla and hybrid get dropout_prob 0 and the
// difficulty-aware arm its dropout mode.
ArmConfig arm_preset(ArmKind arm, TaskKind task);

// Every field, nested objects for sft, grpo, optimizer, reward, policy,
// difficulty and seeds.
std::string to_json(const ArmConfig& cfg);
// Missing fields take the preset values of the given arm and task. Each
// override is a dotted path ("grpo.optimizer.learning_rate") and a value
// parsed as JSON, falling back to a plain string. Throws
// std::invalid_argument on unknown fields or invalid values.
ArmConfig arm_config_from_json(
    std::string_view text, std::span<const std::pair<std::string, std::string>> overrides = {});

// The GRPO prompt stream: task (step, j) is generated from
// mix_seed(seed, step * prompts_per_step + j).
TaskStream generated_task_stream(TaskKind kind, const Difficulty& difficulty, bool hybrid,
                                 std::uint64_t seed, int prompts_per_step);

// Marks each example with whether the policy answers it correctly under
// greedy decoding.
void probe_base_correct(const PolicyParams& policy, TaskKind kind,
                        std::span<SftExample> corpus, int max_completion);

struct ArmResult {
  std::string run_dir;
  SftReport sft;
  EvalReport sft_eval;
  EvalReport final_eval;
  std::vector<StepRecord> steps;
  double sft_seconds = 0.0;
  double grpo_seconds = 0.0;
  double wall_seconds = 0.0;
};

using ArmLog = std::function<void(const std::string&)>;

// Runs the warm start and GRPO and writes the run directory. The trainer
// seeds come from cfg.seeds, not from cfg.sft or cfg.grpo. A TrainingAbort
// is rethrown after summary.json records it.
ArmResult run_arm(const ArmConfig& cfg, const ArmLog& log = {});

}  // namespace ton
