#include "ton/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ton {

void GrpoConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("GrpoConfig: " + what); };
  if (group_size < 2) fail("group_size must be >= 2");
  if (!(clip_eps > 0.0 && clip_eps < 1.0)) fail("clip_eps must lie in (0, 1)");
  if (!(kl_coef >= 0.0)) fail("kl_coef must be >= 0");
  if (steps < 0) fail("steps must be >= 0");
  if (!(temperature > 0.0)) fail("temperature must be > 0");
  if (max_completion < 1) fail("max_completion must be >= 1");
  if (prompts_per_step < 1) fail("prompts_per_step must be >= 1");
  if (collapse_window < 1) fail("collapse_window must be >= 1");
  optimizer.validate();
  reward.validate();
}

std::vector<double> advantages(std::span<const double> rewards) {
  if (rewards.size() < 2) throw std::invalid_argument("advantages: need at least two rewards");
  const auto n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double std = std::sqrt(var / n);
  std::vector<double> out(rewards.size(), 0.0);
  if (std < 1e-8) return out;
  for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mean) / std;
  return out;
}

double clipped_surrogate(double ratio, double eps, double advantage) {
  const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
  return std::min(ratio * advantage, clipped * advantage);
}

double kl_estimator(double log_ratio) { return std::exp(log_ratio) - log_ratio - 1.0; }

GroupRollout rollout_group(const PolicyParams& pi_old, const PolicyParams& pi_ref,
                           const TaskInstance& task, const GrpoConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  DecodingConfig dc;
  dc.temperature = cfg.temperature;
  dc.max_new_tokens = cfg.max_completion;

  GroupRollout g;
  g.task = task;
  const auto n = static_cast<std::size_t>(cfg.group_size);
  g.completions.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Completion c = sample(pi_old, task.prompt, dc, seed + i);
    g.parses.push_back(parse(c.tokens));
    const ParseResult& pr = g.parses.back();
    std::optional<Answer> pred;
    if (const auto* resp = std::get_if<Response>(&pr)) pred = decode_answer(task.kind, resp->answer);
    g.breakdowns.push_back(composite_reward(task.kind, pr, pred, task.truth, cfg.reward));
    g.rewards.push_back(g.breakdowns.back().total);

    std::vector<int> full = task.prompt;
    full.insert(full.end(), c.tokens.begin(), c.tokens.end());
    g.ref_logprobs.push_back(sequence_logprobs(pi_ref, full, task.prompt.size()));
    g.old_logprobs.push_back(c.logprobs);
    g.completions.push_back(std::move(c));
  }
  g.advantages = advantages(g.rewards);
  return g;
}

Var grpo_loss(Tape& tape, PolicyParams& params, const GroupRollout& group, const GrpoConfig& cfg,
              LossDiagnostics* diagnostics) {
  const std::size_t n = group.completions.size();
  if (n == 0 || group.advantages.size() != n || group.old_logprobs.size() != n ||
      group.ref_logprobs.size() != n) {
    throw std::invalid_argument("grpo_loss: malformed group");
  }
  LossDiagnostics diag;
  double kl_sum = 0.0;
  Var total{};
  const std::vector<int>& prompt = group.task.prompt;
  std::vector<int> full;

  for (std::size_t i = 0; i < n; ++i) {
    const Completion& c = group.completions[i];
    const std::size_t len = c.tokens.size();
    if (group.old_logprobs[i].size() != len || group.ref_logprobs[i].size() != len) {
      throw std::invalid_argument("grpo_loss: log-probabilities do not match completion " +
                                  std::to_string(i));
    }
    full = prompt;
    full.insert(full.end(), c.tokens.begin(), c.tokens.end());
    Var lp = sequence_logprobs(tape, params, full, prompt.size());
    Var old = tape.constant(Tensor({len, 1}, group.old_logprobs[i]));
    Var ref = tape.constant(Tensor({len, 1}, group.ref_logprobs[i]));

    Var log_ratio = ops::sub(lp, old);
    Var ratio = ops::exp(log_ratio);
    const double a = group.advantages[i];
    Var surrogate = ops::minimum(ops::scale(ratio, a),
                                 ops::scale(ops::clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps), a));
    Var ref_gap = ops::sub(ref, lp);
    Var kl = ops::add_scalar(ops::sub(ops::exp(ref_gap), ref_gap), -1.0);
    Var term = ops::sum(ops::sub(surrogate, ops::scale(kl, cfg.kl_coef)));
    if (cfg.length_normalize) term = ops::scale(term, 1.0 / static_cast<double>(len));
    total = total.tape ? ops::add(total, term) : term;

    double kl_tokens = 0.0;
    for (double v : kl.value().data) kl_tokens += v;
    kl_sum += kl_tokens / static_cast<double>(len);
    for (double v : log_ratio.value().data) {
      const double m = std::isfinite(v) ? std::abs(v) : HUGE_VAL;
      if (!(m <= diag.max_abs_log_ratio)) {
        diag.max_abs_log_ratio = m;
        diag.worst_completion = static_cast<int>(i);
      }
    }
  }
  diag.kl_mean = kl_sum / static_cast<double>(n);
  if (diagnostics) *diagnostics = diag;

  Var loss = ops::scale(total, -1.0 / static_cast<double>(n));
  if (!std::isfinite(loss.item())) {
    std::ostringstream msg;
    msg << "grpo_loss: non-finite loss (max |log-ratio| " << diag.max_abs_log_ratio
        << " at completion " << diag.worst_completion << ", kl_mean " << diag.kl_mean << ")";
    throw TrainingAbort(msg.str());
  }
  return loss;
}

GrpoResult grpo_train(PolicyParams& params, const TaskStream& tasks, const GrpoConfig& cfg,
                      const StepObserver& observer) {
  cfg.validate();
  const FrozenPolicy ref = snapshot(params);
  Optimizer opt(cfg.optimizer);
  GrpoResult result;
  int zero_reward_run = 0;

  for (int step = 0; step < cfg.steps; ++step) {
    const FrozenPolicy old = snapshot(params);
    std::vector<GroupRollout> groups;
    for (int j = 0; j < cfg.prompts_per_step; ++j) {
      const auto index = static_cast<std::uint64_t>(step) * static_cast<std::uint64_t>(cfg.prompts_per_step) +
                         static_cast<std::uint64_t>(j);
      groups.push_back(rollout_group(*old, *ref, tasks(step, j), cfg, mix_seed(cfg.seed, index)));
    }

    params.zero_grad();
    double kl_sum = 0.0;
    for (std::size_t j = 0; j < groups.size(); ++j) {
      Tape tape;
      LossDiagnostics diag;
      Var loss;
      try {
        loss = grpo_loss(tape, params, groups[j], cfg, &diag);
      } catch (const TrainingAbort& e) {
        throw TrainingAbort("step " + std::to_string(step) + ": " + e.what());
      }
      kl_sum += diag.kl_mean;
      tape.backward(loss);
    }
    opt.step(params);

    std::vector<double> rewards;
    std::vector<ParseResult> parses;
    std::vector<std::size_t> lengths;
    for (const GroupRollout& g : groups) {
      rewards.insert(rewards.end(), g.rewards.begin(), g.rewards.end());
      parses.insert(parses.end(), g.parses.begin(), g.parses.end());
      for (const Completion& c : g.completions) lengths.push_back(c.tokens.size());
    }
    const StepRecord record = make_step_record(step, rewards, parses, lengths,
                                               kl_sum / static_cast<double>(groups.size()));
    result.steps.push_back(record);
    if (observer) observer(record, groups);

    zero_reward_run = record.reward_mean == 0.0 ? zero_reward_run + 1 : 0;
    if (zero_reward_run >= cfg.collapse_window) {
      throw TrainingAbort("grpo_train: mean reward 0 for " + std::to_string(zero_reward_run) +
                          " consecutive steps (through step " + std::to_string(step) + ")");
    }
  }
  return result;
}

}  // namespace ton
