// Hot paths of training: the taped forward/backward pass, incremental
// decoding, a full GRPO group and greedy evaluation.

#include <benchmark/benchmark.h>

#include "ton/evaluate.hpp"
#include "ton/grpo.hpp"

namespace {

using namespace ton;

const PolicyParams& policy() {
  static const PolicyParams p = PolicyParams::init(PolicyConfig{}, 1);
  return p;
}

std::vector<int> sequence(int len) {
  std::vector<int> s(static_cast<std::size_t>(len));
  for (int i = 0; i < len; ++i) s[static_cast<std::size_t>(i)] = tok::digit(i % 10);
  return s;
}

void BM_ForwardBackward(benchmark::State& state) {
  PolicyParams p = policy();
  const auto s = sequence(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    p.zero_grad();
    Tape tape;
    Var lp = sequence_logprobs(tape, p, s, 1);
    tape.backward(ops::sum(lp));
    benchmark::DoNotOptimize(lp.item());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForwardBackward)->Arg(16)->Arg(32)->Arg(64);

void BM_Sample(benchmark::State& state) {
  const auto prompt = generate(TaskKind::kCount, Difficulty{}, 3).prompt;
  DecodingConfig dc;
  dc.max_new_tokens = static_cast<int>(state.range(0));
  dc.stop_token = -1;
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(sample(policy(), prompt, dc, seed++));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Sample)->Arg(16)->Arg(48);

void BM_GrpoGroup(benchmark::State& state) {
  PolicyParams p = policy();
  const TaskInstance task = generate(TaskKind::kCount, Difficulty{}, 5);
  GrpoConfig cfg;
  cfg.max_completion = 32;
  std::uint64_t seed = 0;
  for (auto _ : state) {
    const GroupRollout g = rollout_group(p, p, task, cfg, seed++);
    p.zero_grad();
    Tape tape;
    Var loss = grpo_loss(tape, p, g, cfg);
    tape.backward(loss);
    benchmark::DoNotOptimize(loss.item());
  }
}
BENCHMARK(BM_GrpoGroup)->Unit(benchmark::kMillisecond);

void BM_EvaluateGrid(benchmark::State& state) {
  EvalOptions opts;
  opts.max_completion = 24;
  for (auto _ : state) benchmark::DoNotOptimize(evaluate(policy(), TaskKind::kGridNav, 4, 1, opts));
}
BENCHMARK(BM_EvaluateGrid)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
