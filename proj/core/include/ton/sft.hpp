#pragma once

// Supervised warm start with thought dropout.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ton/policy.hpp"
#include "ton/rng.hpp"
#include "ton/tasks.hpp"

namespace ton {

// Raised when a trainer stops on a divergence or collapse guard.
class TrainingAbort : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class OptimizerKind { kSgd, kAdam };

std::string_view to_string(OptimizerKind kind);
OptimizerKind optimizer_kind_from_string(std::string_view name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kSgd;
  double learning_rate = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double max_grad_norm = 0.0;  // global-norm clipping, 0 disables

  void validate() const;
  bool operator==(const OptimizerConfig&) const = default;
};

// Applies one update from the gradients currently stored on the params.
// Does not clear them.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg);
  // Returns the pre-clipping global gradient norm.
  double step(PolicyParams& params);
  const OptimizerConfig& config() const { return cfg_; }

 private:
  OptimizerConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  long t_ = 0;
};

enum class DropoutMode { kRandom, kDifficultyAware };

std::string_view to_string(DropoutMode mode);
DropoutMode dropout_mode_from_string(std::string_view name);

struct SftConfig {
  double dropout_prob = 0.5;
  OptimizerConfig optimizer;
  int epochs = 2;
  int batch_size = 8;
  std::uint64_t seed = 0;
  DropoutMode dropout_mode = DropoutMode::kRandom;

  void validate() const;
};

struct SftExample {
  std::vector<int> prompt;
  std::vector<int> thought;
  std::vector<int> answer;
  std::optional<bool> base_correct;

  bool operator==(const SftExample&) const = default;
};

// Oracle-thought examples for training_tasks(kind, difficulty, n, seed).
std::vector<SftExample> make_sft_corpus(TaskKind kind, const Difficulty& difficulty, int n,
                                        std::uint64_t seed, bool hybrid = false);

// Exactly one uniform draw: below p the thought becomes the skip marker.
std::vector<int> thought_dropout(std::span<const int> thought, double p, Rng& rng);
// Skip marker for examples the base policy already answered correctly.
// Throws std::invalid_argument when base_correct is unset.
std::vector<int> difficulty_aware_dropout(const SftExample& example);

struct SftTarget {
  std::vector<int> tokens;  // prompt followed by the rendered response
  std::size_t prompt_len = 0;

  std::size_t response_length() const { return tokens.size() - prompt_len; }
  // 1 on response positions, 0 on prompt positions.
  std::vector<int> loss_mask() const;
};

// Throws ContextOverflow when the target exceeds max_context.
SftTarget build_target(const SftExample& example, std::span<const int> dropped_thought,
                       int max_context);

// Mean next-token cross-entropy over the response positions of target.
Var masked_loss(Tape& tape, PolicyParams& params, const SftTarget& target);

struct SftEpochStats {
  int epoch = 0;
  double mean_loss = 0.0;      // per response token
  double skip_fraction = 0.0;  // realized fraction of dropped thoughts
};

struct SftReport {
  std::vector<SftEpochStats> epochs;
};

// Shuffles every epoch and redraws dropout decisions per example. Throws
// TrainingAbort on a non-finite loss.
SftReport sft_train(PolicyParams& params, std::span<const SftExample> corpus,
                    const SftConfig& cfg);

}  // namespace ton
