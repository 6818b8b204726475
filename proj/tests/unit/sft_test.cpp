#include "ton/sft.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

namespace ton {
namespace {

PolicyConfig tiny_policy() {
  PolicyConfig c;
  c.embed_dim = 16;
  c.n_layers = 1;
  c.n_heads = 2;
  c.mlp_hidden = 32;
  c.max_context = 64;
  return c;
}

Difficulty small_count() {
  Difficulty d;
  d.min_items = 3;
  d.max_items = 4;
  return d;
}

double greedy_skip_rate(const PolicyParams& params, TaskKind kind, const Difficulty& d, int n,
                        std::uint64_t seed) {
  DecodingConfig dc;
  dc.greedy = true;
  dc.max_new_tokens = 40;
  int skips = 0;
  for (int i = 0; i < n; ++i) {
    const auto t = generate(kind, d, seed + static_cast<std::uint64_t>(i));
    const auto c = sample(params, t.prompt, dc, 0);
    const auto r = parse(c.tokens);
    if (const auto* resp = std::get_if<Response>(&r); resp && resp->is_skip) ++skips;
  }
  return static_cast<double>(skips) / n;
}

TEST(ThoughtDropout, BoundaryProbabilitiesAreExact) {
  Rng rng(1);
  const std::vector<int> thought{tok::digit(1), tok::digit(2)};
  for (int i = 0; i < 1000; ++i) {
    EXPECT_EQ(thought_dropout(thought, 0.0, rng), thought);
    EXPECT_EQ(thought_dropout(thought, 1.0, rng), std::vector<int>{tok::kSkip});
  }
}

TEST(ThoughtDropout, ConsumesExactlyOneDraw) {
  Rng a(5), b(5);
  const std::vector<int> thought{tok::digit(1)};
  thought_dropout(thought, 0.5, a);
  b.uniform();
  EXPECT_EQ(a.next(), b.next());
}

class DropoutRate : public ::testing::TestWithParam<double> {};

TEST_P(DropoutRate, WithinThreeSigmaOverTenThousandDraws) {
  const double p = GetParam();
  Rng rng(static_cast<std::uint64_t>(p * 1000) + 3);
  const std::vector<int> thought{tok::digit(4)};
  const int n = 10000;
  int skips = 0;
  for (int i = 0; i < n; ++i) skips += is_skip_thought(thought_dropout(thought, p, rng)) ? 1 : 0;
  const double sigma = std::sqrt(p * (1 - p) / n);
  EXPECT_NEAR(static_cast<double>(skips) / n, p, 3 * sigma);
}

INSTANTIATE_TEST_SUITE_P(SweepSet, DropoutRate, ::testing::Values(0.2, 0.5, 0.8));

TEST(DifficultyAwareDropout, Definition) {
  SftExample ex{{tok::kBos}, {tok::digit(1), tok::digit(2)}, {tok::digit(3)}, true};
  EXPECT_EQ(difficulty_aware_dropout(ex), std::vector<int>{tok::kSkip});
  ex.base_correct = false;
  EXPECT_EQ(difficulty_aware_dropout(ex), ex.thought);
  ex.base_correct.reset();
  EXPECT_THROW(difficulty_aware_dropout(ex), std::invalid_argument);
}

TEST(DifficultyAwareDropout, SkipFractionEqualsBaseCorrectFraction) {
  auto corpus = make_sft_corpus(TaskKind::kCount, small_count(), 50, 10);
  for (std::size_t i = 0; i < corpus.size(); ++i) corpus[i].base_correct = i % 5 < 2;  // 40%
  int skips = 0;
  for (const auto& ex : corpus) skips += is_skip_thought(difficulty_aware_dropout(ex)) ? 1 : 0;
  EXPECT_EQ(skips, 20);

  // The trainer reports the same realized fraction every epoch.
  auto params = PolicyParams::init(tiny_policy(), 1);
  SftConfig cfg;
  cfg.dropout_mode = DropoutMode::kDifficultyAware;
  cfg.epochs = 2;
  const auto report = sft_train(params, corpus, cfg);
  for (const auto& e : report.epochs) EXPECT_DOUBLE_EQ(e.skip_fraction, 0.4);
}

TEST(BuildTarget, DroppedThoughtLayout) {
  const SftExample ex{{tok::kBos, tok::kTaskCount}, {tok::digit(1)}, {tok::digit(3)}, {}};
  const std::vector<int> skip{tok::kSkip};
  const auto t = build_target(ex, skip, 64);
  EXPECT_EQ(t.prompt_len, 2u);
  EXPECT_EQ(t.tokens, (std::vector<int>{tok::kBos, tok::kTaskCount, tok::kThinkOpen, tok::kSkip,
                                        tok::kThinkClose, tok::kAnswerOpen, tok::digit(3),
                                        tok::kAnswerClose, tok::kEos}));
}

TEST(BuildTarget, FullThoughtAndMask) {
  const auto t0 = generate(TaskKind::kChainArith, Difficulty{}, 4);
  const SftExample ex{t0.prompt, oracle_thought(t0), answer_tokens(t0.truth), {}};
  const auto t = build_target(ex, ex.thought, 256);
  const auto it = std::search(t.tokens.begin(), t.tokens.end(), ex.thought.begin(), ex.thought.end());
  EXPECT_NE(it, t.tokens.end());
  const auto mask = t.loss_mask();
  EXPECT_EQ(mask.size(), t.tokens.size());
  EXPECT_EQ(static_cast<std::size_t>(std::accumulate(mask.begin(), mask.end(), 0)), t.response_length());
  EXPECT_EQ(t.response_length(), render(ex.thought, ex.answer).size());
  for (std::size_t i = 0; i < t.prompt_len; ++i) EXPECT_EQ(mask[i], 0);
}

TEST(BuildTarget, OverflowThrows) {
  const SftExample ex{std::vector<int>(60, tok::kSep), {tok::digit(1)}, {tok::digit(3)}, {}};
  EXPECT_THROW(build_target(ex, ex.thought, 64), ContextOverflow);
}

TEST(MaskedLoss, EqualsMeanResponseNegativeLogLikelihood) {
  auto params = PolicyParams::init(tiny_policy(), 3);
  const auto t0 = generate(TaskKind::kCount, small_count(), 9);
  const SftExample ex{t0.prompt, oracle_thought(t0), answer_tokens(t0.truth), {}};
  const auto target = build_target(ex, ex.thought, 64);
  Tape tape;
  const double loss = masked_loss(tape, params, target).item();
  const auto lp = sequence_logprobs(params, target.tokens, target.prompt_len);
  const double nll = -std::accumulate(lp.begin(), lp.end(), 0.0) / static_cast<double>(lp.size());
  EXPECT_NEAR(loss, nll, 1e-10);
}

TEST(MaskedLoss, GradientIgnoresPromptPositions) {
  // Same gradient as the response-only log-likelihood, so prompt positions
  // contribute nothing.
  const auto t0 = generate(TaskKind::kCount, small_count(), 9);
  const SftExample ex{t0.prompt, oracle_thought(t0), answer_tokens(t0.truth), {}};
  const auto target = build_target(ex, ex.thought, 64);

  auto a = PolicyParams::init(tiny_policy(), 3);
  a.zero_grad();
  Tape ta;
  ta.backward(masked_loss(ta, a, target));

  auto b = PolicyParams::init(tiny_policy(), 3);
  b.zero_grad();
  Tape tb;
  const Var lp = sequence_logprobs(tb, b, target.tokens, target.prompt_len);
  tb.backward(ops::scale(ops::sum(lp), -1.0 / static_cast<double>(target.response_length())));

  std::vector<double> ga, gb;
  a.for_each([&](std::string_view, const Tensor& t) { ga.insert(ga.end(), t.grad.begin(), t.grad.end()); });
  b.for_each([&](std::string_view, const Tensor& t) { gb.insert(gb.end(), t.grad.begin(), t.grad.end()); });
  ASSERT_EQ(ga.size(), gb.size());
  for (std::size_t i = 0; i < ga.size(); ++i) EXPECT_NEAR(ga[i], gb[i], 1e-10);
}

TEST(Optimizer, SgdStep) {
  auto params = PolicyParams::zeros(tiny_policy());
  params.zero_grad();
  params.final_bias.grad[0] = 2.0;
  OptimizerConfig cfg;
  cfg.learning_rate = 0.1;
  Optimizer opt(cfg);
  EXPECT_DOUBLE_EQ(opt.step(params), 2.0);
  EXPECT_DOUBLE_EQ(params.final_bias.data[0], -0.2);
}

TEST(Optimizer, AdamFirstStepIsLearningRateTimesSign) {
  auto params = PolicyParams::zeros(tiny_policy());
  params.zero_grad();
  params.final_bias.grad[0] = -5.0;
  params.final_bias.grad[1] = 1e-3;
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::kAdam;
  cfg.learning_rate = 0.01;
  Optimizer opt(cfg);
  opt.step(params);
  EXPECT_NEAR(params.final_bias.data[0], 0.01, 1e-9);
  EXPECT_NEAR(params.final_bias.data[1], -0.01, 1e-7);
}

TEST(Optimizer, ClipsGlobalNorm) {
  auto params = PolicyParams::zeros(tiny_policy());
  params.zero_grad();
  params.final_bias.grad[0] = 3.0;
  params.final_bias.grad[1] = 4.0;
  OptimizerConfig cfg;
  cfg.learning_rate = 1.0;
  cfg.max_grad_norm = 1.0;
  Optimizer opt(cfg);
  EXPECT_DOUBLE_EQ(opt.step(params), 5.0);
  EXPECT_NEAR(params.final_bias.data[0], -0.6, 1e-12);
  EXPECT_NEAR(params.final_bias.data[1], -0.8, 1e-12);
}

TEST(Optimizer, ConfigValidation) {
  OptimizerConfig c;
  c.learning_rate = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.beta1 = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_EQ(optimizer_kind_from_string("adam"), OptimizerKind::kAdam);
  EXPECT_THROW(optimizer_kind_from_string("rmsprop"), std::invalid_argument);
}

TEST(SftConfig, Validation) {
  SftConfig c;
  c.dropout_prob = 1.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_EQ(dropout_mode_from_string("difficulty_aware"), DropoutMode::kDifficultyAware);
  EXPECT_THROW(dropout_mode_from_string("easy"), std::invalid_argument);
}

TEST(SftTrain, EmptyCorpusThrows) {
  auto params = PolicyParams::init(tiny_policy(), 1);
  EXPECT_THROW(sft_train(params, std::vector<SftExample>{}, SftConfig{}), std::invalid_argument);
}

TEST(SftTrain, MemorizesRepeatedExample) {
  auto params = PolicyParams::init(tiny_policy(), 2);
  const auto t0 = generate(TaskKind::kCount, small_count(), 3);
  const std::vector<SftExample> corpus(8, SftExample{t0.prompt, oracle_thought(t0),
                                                     answer_tokens(t0.truth), {}});
  SftConfig cfg;
  cfg.dropout_prob = 0.0;
  cfg.epochs = 40;
  cfg.batch_size = 4;
  cfg.optimizer.kind = OptimizerKind::kAdam;
  cfg.optimizer.learning_rate = 0.01;
  const auto report = sft_train(params, corpus, cfg);
  EXPECT_LT(report.epochs.back().mean_loss, 0.05);
  EXPECT_LT(report.epochs.back().mean_loss, report.epochs.front().mean_loss);
}

TEST(SftTrain, DeterministicAndRedrawsEveryEpoch) {
  const auto corpus = make_sft_corpus(TaskKind::kCount, small_count(), 40, 100);
  SftConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 9;
  auto a = PolicyParams::init(tiny_policy(), 4);
  auto b = PolicyParams::init(tiny_policy(), 4);
  const auto ra = sft_train(a, corpus, cfg);
  const auto rb = sft_train(b, corpus, cfg);
  EXPECT_EQ(checkpoint_to_string(a), checkpoint_to_string(b));
  ASSERT_EQ(ra.epochs.size(), 3u);
  for (std::size_t e = 0; e < 3; ++e) {
    EXPECT_EQ(ra.epochs[e].mean_loss, rb.epochs[e].mean_loss);
    EXPECT_EQ(ra.epochs[e].skip_fraction, rb.epochs[e].skip_fraction);
  }
  // Fresh decisions per epoch: three identical fractions would be a coincidence.
  EXPECT_FALSE(ra.epochs[0].skip_fraction == ra.epochs[1].skip_fraction &&
               ra.epochs[1].skip_fraction == ra.epochs[2].skip_fraction);
}

TEST(SftTrain, NonFiniteLossAborts) {
  auto params = PolicyParams::init(tiny_policy(), 1);
  params.unembed.data[0] = std::nan("");
  const auto corpus = make_sft_corpus(TaskKind::kCount, small_count(), 4, 1);
  EXPECT_THROW(sft_train(params, corpus, SftConfig{}), TrainingAbort);
}

class FormatAdoption : public ::testing::TestWithParam<double> {};

TEST_P(FormatAdoption, GreedySkipRateFollowsCorpus) {
  const double p = GetParam();
  auto params = PolicyParams::init(tiny_policy(), 6);
  const auto corpus = make_sft_corpus(TaskKind::kCount, small_count(), 200, 500);
  SftConfig cfg;
  cfg.dropout_prob = p;
  cfg.epochs = 6;
  cfg.batch_size = 8;
  cfg.optimizer.kind = OptimizerKind::kAdam;
  cfg.optimizer.learning_rate = 0.005;
  sft_train(params, corpus, cfg);
  const double rate = greedy_skip_rate(params, TaskKind::kCount, small_count(), 100, 90000);
  if (p == 1.0) EXPECT_GE(rate, 0.95);
  else EXPECT_LE(rate, 0.05);
}

INSTANTIATE_TEST_SUITE_P(Boundaries, FormatAdoption, ::testing::Values(0.0, 1.0));

}  // namespace
}  // namespace ton
