#include "ton/sft.hpp"

#include <cmath>
#include <numeric>

#include "ton/grammar.hpp"

namespace ton {

std::string_view to_string(OptimizerKind kind) {
  return kind == OptimizerKind::kAdam ? "adam" : "sgd";
}

OptimizerKind optimizer_kind_from_string(std::string_view name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adam") return OptimizerKind::kAdam;
  throw std::invalid_argument("unknown optimizer: " + std::string(name));
}

std::string_view to_string(DropoutMode mode) {
  return mode == DropoutMode::kDifficultyAware ? "difficulty_aware" : "random";
}

DropoutMode dropout_mode_from_string(std::string_view name) {
  if (name == "random") return DropoutMode::kRandom;
  if (name == "difficulty_aware") return DropoutMode::kDifficultyAware;
  throw std::invalid_argument("unknown dropout mode: " + std::string(name));
}

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("optimizer: learning_rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("optimizer: betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw std::invalid_argument("optimizer: eps must be > 0");
  if (max_grad_norm < 0.0) throw std::invalid_argument("optimizer: max_grad_norm must be >= 0");
}

Optimizer::Optimizer(OptimizerConfig cfg) : cfg_(cfg) { cfg_.validate(); }

double Optimizer::step(PolicyParams& params) {
  double sq = 0.0;
  params.for_each([&](std::string_view, const Tensor& t) {
    for (double g : t.grad) sq += g * g;
  });
  const double norm = std::sqrt(sq);
  const double clip =
      (cfg_.max_grad_norm > 0.0 && norm > cfg_.max_grad_norm) ? cfg_.max_grad_norm / norm : 1.0;

  if (cfg_.kind == OptimizerKind::kSgd) {
    params.for_each([&](std::string_view, Tensor& t) {
      if (t.grad.empty()) return;
      for (std::size_t i = 0; i < t.size(); ++i) t.data[i] -= cfg_.learning_rate * clip * t.grad[i];
    });
    return norm;
  }

  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  std::size_t k = 0;
  params.for_each([&](std::string_view, Tensor& t) {
    if (m_.size() <= k) {
      m_.emplace_back(t.size(), 0.0);
      v_.emplace_back(t.size(), 0.0);
    }
    auto& m = m_[k];
    auto& v = v_[k];
    ++k;
    if (t.grad.empty()) return;
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double g = clip * t.grad[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      t.data[i] -= cfg_.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
    }
  });
  return norm;
}

void SftConfig::validate() const {
  if (!(dropout_prob >= 0.0 && dropout_prob <= 1.0)) {
    throw std::invalid_argument("SftConfig: dropout_prob must lie in [0, 1]");
  }
  if (epochs < 1) throw std::invalid_argument("SftConfig: epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("SftConfig: batch_size must be >= 1");
  optimizer.validate();
}

std::vector<SftExample> make_sft_corpus(TaskKind kind, const Difficulty& difficulty, int n,
                                        std::uint64_t seed, bool hybrid) {
  std::vector<SftExample> out;
  for (const TaskInstance& t : training_tasks(kind, difficulty, n, seed, hybrid)) {
    out.push_back({t.prompt, oracle_thought(t), answer_tokens(t.truth), std::nullopt});
  }
  return out;
}

std::vector<int> thought_dropout(std::span<const int> thought, double p, Rng& rng) {
  if (rng.uniform() < p) return {tok::kSkip};
  return {thought.begin(), thought.end()};
}

std::vector<int> difficulty_aware_dropout(const SftExample& example) {
  if (!example.base_correct) {
    throw std::invalid_argument("difficulty_aware_dropout: example has no base_correct flag");
  }
  if (*example.base_correct) return {tok::kSkip};
  return example.thought;
}

std::vector<int> SftTarget::loss_mask() const {
  std::vector<int> mask(tokens.size(), 0);
  std::fill(mask.begin() + static_cast<std::ptrdiff_t>(prompt_len), mask.end(), 1);
  return mask;
}

SftTarget build_target(const SftExample& example, std::span<const int> dropped_thought,
                       int max_context) {
  SftTarget t;
  t.tokens = example.prompt;
  t.prompt_len = example.prompt.size();
  const auto response = render(dropped_thought, example.answer);
  t.tokens.insert(t.tokens.end(), response.begin(), response.end());
  // The final token is only ever predicted, never fed.
  if (t.tokens.size() - 1 > static_cast<std::size_t>(max_context)) {
    throw ContextOverflow("build_target: " + std::to_string(t.tokens.size()) +
                          " tokens exceed max_context " + std::to_string(max_context));
  }
  return t;
}

Var masked_loss(Tape& tape, PolicyParams& params, const SftTarget& target) {
  const std::span<const int> all(target.tokens);
  std::vector<int> next(all.size() - 1, -1);
  for (std::size_t r = 0; r + 1 < all.size(); ++r) {
    if (r + 1 >= target.prompt_len) next[r] = all[r + 1];
  }
  return ops::cross_entropy(forward_logits(tape, params, all.first(all.size() - 1)), next);
}

SftReport sft_train(PolicyParams& params, std::span<const SftExample> corpus,
                    const SftConfig& cfg) {
  cfg.validate();
  if (corpus.empty()) throw std::invalid_argument("sft_train: empty corpus");
  Optimizer opt(cfg.optimizer);
  SftReport report;
  const int max_context = params.config().max_context;
  std::vector<std::size_t> order(corpus.size());

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.below(i)]);
    }

    // Token-level averaging: every response token in a batch weighs the
    // same, so short skip targets do not outweigh long ones.
    double loss_sum = 0.0;
    std::size_t token_count = 0;
    std::size_t skipped = 0;
    std::vector<SftTarget> batch;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      batch.clear();
      std::size_t batch_tokens = 0;
      for (std::size_t b = begin; b < end; ++b) {
        const SftExample& ex = corpus[order[b]];
        const std::vector<int> thought = cfg.dropout_mode == DropoutMode::kRandom
                                             ? thought_dropout(ex.thought, cfg.dropout_prob, rng)
                                             : difficulty_aware_dropout(ex);
        if (is_skip_thought(thought)) ++skipped;
        batch.push_back(build_target(ex, thought, max_context));
        batch_tokens += batch.back().response_length();
      }
      params.zero_grad();
      for (std::size_t b = 0; b < batch.size(); ++b) {
        Tape tape;
        Var loss = masked_loss(tape, params, batch[b]);
        const double value = loss.item();
        if (!std::isfinite(value)) {
          throw TrainingAbort("sft_train: non-finite loss at epoch " + std::to_string(epoch) +
                              ", example " + std::to_string(order[begin + b]));
        }
        const auto n = static_cast<double>(batch[b].response_length());
        loss_sum += value * n;
        tape.backward(ops::scale(loss, n / static_cast<double>(batch_tokens)));
      }
      token_count += batch_tokens;
      opt.step(params);
    }
    report.epochs.push_back({epoch, loss_sum / static_cast<double>(token_count),
                             static_cast<double>(skipped) / static_cast<double>(corpus.size())});
  }
  return report;
}

}  // namespace ton
