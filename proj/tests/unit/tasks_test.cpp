#include "ton/tasks.hpp"

#include <gtest/gtest.h>

#include <map>

#include "ton/jsonl.hpp"

namespace ton {
namespace {

long number(const Answer& a) { return std::get<NumberAnswer>(a).value; }

TaskInstance count_task(int target, std::vector<int> items) {
  return make_instance(CountMeta{target, std::move(items)});
}

GridState grid(int w, int h, Cell agent, Cell goal, int reach = 0) {
  GridState g;
  g.width = w;
  g.height = h;
  g.agent = agent;
  g.goal = goal;
  g.click_reach = reach;
  return g;
}

// Independent evaluator for the arithmetic chains.
int brute_force_chain(const ArithMeta& m) {
  int v = m.start;
  for (const ArithOp& op : m.ops) {
    switch (op.kind) {
      case ArithOpKind::kAdd: v = (v + op.operand) % 10; break;
      case ArithOpKind::kSub: v = (v + 10 - op.operand) % 10; break;
      case ArithOpKind::kDouble: v = (2 * v) % 10; break;
    }
  }
  return v;
}

TEST(Difficulty, RejectsOutOfRange) {
  Difficulty d;
  d.max_items = 16;
  EXPECT_THROW(generate(TaskKind::kCount, d, 1), DifficultyError);
  d = {};
  d.min_ops = 2;
  EXPECT_THROW(generate(TaskKind::kChainArith, d, 1), DifficultyError);
  d = {};
  d.min_grid = 6;
  d.max_grid = 5;
  EXPECT_THROW(generate(TaskKind::kGridNav, d, 1), DifficultyError);
  // Fields of other kinds are not consulted.
  d = {};
  d.max_ops = 99;
  EXPECT_NO_THROW(generate(TaskKind::kCount, d, 1));
}

TEST(Count, FiveItemsTwoTargets) {
  const auto t = count_task(1, {1, 0, 2, 1, 3});
  EXPECT_EQ(number(t.truth), 2);
  EXPECT_EQ(t.prompt, (std::vector<int>{tok::kBos, tok::kTaskCount, tok::symbol(1), tok::kSep,
                                        tok::symbol(1), tok::symbol(0), tok::symbol(2),
                                        tok::symbol(1), tok::symbol(3), tok::kSep}));
}

TEST(Count, ThoughtIsScanWithRunningTally) {
  const auto t = count_task(1, {1, 0, 1});
  EXPECT_EQ(oracle_thought(t), (std::vector<int>{tok::symbol(1), tok::digit(1), tok::symbol(0),
                                                 tok::symbol(1), tok::digit(2)}));
}

TEST(Count, NoTargetsGivesEmptyTally) {
  const auto t = count_task(2, {0, 1, 3});
  EXPECT_EQ(number(t.truth), 0);
  for (int tk : oracle_thought(t)) EXPECT_FALSE(tok::is_digit(tk));
}

TEST(ChainArith, HandEvaluatedExample) {
  const ArithMeta m{3, {{ArithOpKind::kAdd, 4}, {ArithOpKind::kDouble, 0}}};
  const auto t = make_instance(m);
  EXPECT_EQ(number(t.truth), 4);
}

TEST(ChainArith, ThoughtCarriesIntermediateValue) {
  const auto t = make_instance(ArithMeta{3, {{ArithOpKind::kAdd, 4}}});
  EXPECT_EQ(oracle_thought(t),
            (std::vector<int>{tok::kOpAdd, tok::digit(4), tok::digit(7)}));
}

TEST(ChainArith, SubtractionWrapsModTen) {
  EXPECT_EQ(apply_op(2, {ArithOpKind::kSub, 5}), 7);
  EXPECT_EQ(apply_op(7, {ArithOpKind::kDouble, 0}), 4);
}

TEST(GridNav, AdjacentGoalBelow) {
  EXPECT_EQ(oracle_action(grid(5, 5, {0, 0}, {0, 1})).type, ActionType::kDown);
  const AgentAction a = oracle_action(grid(5, 5, {0, 0}, {0, 1}, 1));
  EXPECT_EQ(a.type, ActionType::kClick);
  ASSERT_TRUE(a.position);
  EXPECT_NEAR(a.position->x, 0.1, 1e-12);
  EXPECT_NEAR(a.position->y, 0.3, 1e-12);
}

TEST(GridNav, HorizontalBeforeVertical) {
  EXPECT_EQ(oracle_action(grid(7, 7, {1, 1}, {4, 5})).type, ActionType::kRight);
  EXPECT_EQ(oracle_action(grid(7, 7, {4, 1}, {4, 5})).type, ActionType::kDown);
  EXPECT_EQ(oracle_action(grid(7, 7, {6, 6}, {4, 5})).type, ActionType::kLeft);
}

TEST(GridNav, AtGoalThought) {
  const auto t = make_instance(grid(5, 5, {2, 2}, {2, 2}));
  EXPECT_EQ(oracle_thought(t).back(), tok::kAtGoal);
  EXPECT_EQ(std::get<AgentAction>(t.truth).type, ActionType::kClick);
}

TEST(GridNav, DisplacementThought) {
  const auto t = make_instance(grid(6, 6, {4, 1}, {1, 3}));
  EXPECT_EQ(oracle_thought(t),
            (std::vector<int>{tok::kAgent, tok::digit(4), tok::digit(1), tok::kGoal, tok::digit(1),
                              tok::digit(3), tok::kLeft, tok::digit(3), tok::kDown, tok::digit(2)}));
}

TEST(GridStep, UpAtTopRowClamps) {
  const GridState s = grid(5, 5, {2, 0}, {4, 4});
  const GridState n = grid_step(s, AgentAction{ActionType::kUp, {}, std::nullopt, std::nullopt});
  EXPECT_EQ(n.agent, s.agent);
  EXPECT_EQ(n.step_index, 1);
  EXPECT_FALSE(n.done);
}

TEST(GridStep, ClickInsideGoalSucceeds) {
  const GridState s = grid(5, 5, {3, 3}, {3, 3});
  AgentAction a{ActionType::kClick, {}, Point{0.75, 0.65}, std::nullopt};
  const GridState n = grid_step(s, a);
  EXPECT_TRUE(n.done);
  EXPECT_TRUE(n.success);
}

TEST(GridStep, ClickOutsideGoalOrReachIsWasted) {
  AgentAction a{ActionType::kClick, {}, Point{0.1, 0.1}, std::nullopt};
  const GridState n = grid_step(grid(5, 5, {3, 3}, {3, 3}), a);
  EXPECT_FALSE(n.done);
  a.position = cell_center(grid(5, 5, {0, 0}, {3, 3}), {3, 3});
  EXPECT_FALSE(grid_step(grid(5, 5, {0, 0}, {3, 3}), a).done);
}

TEST(GridStep, BudgetExhaustionFails) {
  GridState s = grid(5, 5, {0, 0}, {4, 4});
  const AgentAction up{ActionType::kUp, {}, std::nullopt, std::nullopt};
  for (int i = 0; i < s.budget(); ++i) s = grid_step(s, up);
  EXPECT_TRUE(s.done);
  EXPECT_FALSE(s.success);
  EXPECT_EQ(s.step_index, 20);
  EXPECT_THROW(grid_step(s, up), EnvironmentError);
}

TEST(GridStep, StopEndsEpisode) {
  const GridState n = grid_step(grid(5, 5, {0, 0}, {4, 4}),
                                AgentAction{ActionType::kStop, {}, std::nullopt, std::nullopt});
  EXPECT_TRUE(n.done);
  EXPECT_FALSE(n.success);
}

TEST(Answers, RoundTripThroughTokens) {
  const Answer n = NumberAnswer{-42};
  EXPECT_EQ(decode_answer(TaskKind::kCount, answer_tokens(n)), n);
  const Answer click = AgentAction{ActionType::kClick, {}, Point{0.07, 0.93}, std::nullopt};
  EXPECT_EQ(decode_answer(TaskKind::kGridNav, answer_tokens(click)), click);
  const Answer left = AgentAction{ActionType::kLeft, {}, std::nullopt, std::nullopt};
  EXPECT_EQ(decode_answer(TaskKind::kGridNav, answer_tokens(left)), left);
}

TEST(Answers, MalformedSegments) {
  EXPECT_FALSE(decode_answer(TaskKind::kCount, std::vector<int>{tok::kUp}));
  EXPECT_FALSE(decode_answer(TaskKind::kCount, std::vector<int>{tok::kMinus}));
  EXPECT_FALSE(decode_answer(TaskKind::kGridNav, std::vector<int>{tok::digit(1)}));
  EXPECT_FALSE(decode_answer(TaskKind::kGridNav, std::vector<int>{tok::kUp, tok::kUp}));
  // A CLICK with broken coordinates keeps its type but loses its position.
  const auto a = decode_answer(TaskKind::kGridNav, std::vector<int>{tok::kClick, tok::digit(1)});
  ASSERT_TRUE(a);
  EXPECT_EQ(std::get<AgentAction>(*a).type, ActionType::kClick);
  EXPECT_FALSE(std::get<AgentAction>(*a).position);
}

TEST(Prompts, HybridHintPrefix) {
  const auto t = generate(TaskKind::kChainArith, Difficulty{}, 3, true);
  EXPECT_EQ(t.prompt.front(), tok::kHybridHint);
  EXPECT_EQ(std::vector<int>(t.prompt.begin() + 1, t.prompt.end()),
            generate(TaskKind::kChainArith, Difficulty{}, 3, false).prompt);
}

TEST(Prompts, MalformedPromptsAreRejected) {
  EXPECT_THROW(decode_prompt(std::vector<int>{tok::kBos, tok::kSep}), std::invalid_argument);
  EXPECT_THROW(decode_prompt(std::vector<int>{tok::kTaskCount, tok::kSep}), std::invalid_argument);
}

TEST(TaskRecords, JsonLineRoundTrip) {
  for (TaskKind kind : {TaskKind::kCount, TaskKind::kChainArith, TaskKind::kGridNav}) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      TaskRecord r = make_task_record(generate(kind, Difficulty{}, seed, seed % 2 == 0));
      r.base_correct = seed % 3 == 0;
      const TaskRecord back = task_record_from_json(to_json_line(r));
      EXPECT_EQ(back.task.prompt, r.task.prompt);
      EXPECT_EQ(back.task.truth, r.task.truth);
      EXPECT_EQ(back.task.seed, r.task.seed);
      EXPECT_EQ(back.task.difficulty, r.task.difficulty);
      EXPECT_EQ(back.thought, r.thought);
      EXPECT_EQ(back.answer, r.answer);
      EXPECT_EQ(back.base_correct, r.base_correct);
    }
  }
  EXPECT_THROW(task_record_from_json("{\"kind\": \"count\"}"), std::runtime_error);
}

// ---------------------------------------------------------------- properties

TEST(TaskProperties, GenerateIsPure) {
  for (TaskKind kind : {TaskKind::kCount, TaskKind::kChainArith, TaskKind::kGridNav}) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const auto a = generate(kind, Difficulty{}, seed);
      const auto b = generate(kind, Difficulty{}, seed);
      EXPECT_EQ(a.prompt, b.prompt);
      EXPECT_EQ(a.truth, b.truth);
      EXPECT_EQ(a.meta, b.meta);
    }
  }
}

TEST(TaskProperties, PromptDecodesToGeneratingMeta) {
  for (TaskKind kind : {TaskKind::kCount, TaskKind::kChainArith, TaskKind::kGridNav}) {
    for (std::uint64_t seed = 0; seed < 500; ++seed) {
      const auto t = generate(kind, Difficulty{}, seed, seed % 5 == 0);
      EXPECT_EQ(decode_prompt(t.prompt), t.meta);
      EXPECT_EQ(t.truth, oracle_answer(t.meta));
    }
  }
}

TEST(TaskProperties, CountCoversEveryAnswer) {
  std::map<long, int> freq;
  Difficulty d;
  for (std::uint64_t seed = 0; seed < 10000; ++seed) {
    freq[number(generate(TaskKind::kCount, d, seed).truth)]++;
  }
  for (long v = 0; v <= d.max_items; ++v) EXPECT_GT(freq[v], 0) << v;
}

TEST(TaskProperties, ChainArithMatchesBruteForce) {
  for (std::uint64_t seed = 0; seed < 10000; ++seed) {
    const auto t = generate(TaskKind::kChainArith, Difficulty{}, seed);
    const auto& m = std::get<ArithMeta>(t.meta);
    EXPECT_EQ(number(t.truth), brute_force_chain(m));
    EXPECT_GE(m.start, 0);
    EXPECT_LE(m.start, 9);
  }
}

TEST(TaskProperties, OraclePlayReachesGoalWithinBudget) {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    GridState s = std::get<GridState>(generate(TaskKind::kGridNav, Difficulty{}, seed).meta);
    while (!s.done) s = grid_step(s, oracle_action(s));
    EXPECT_TRUE(s.success) << seed;
    EXPECT_LE(s.step_index, s.budget());
  }
}

TEST(TaskProperties, ThoughtsNeverHoldStructuralTokens) {
  for (TaskKind kind : {TaskKind::kCount, TaskKind::kChainArith, TaskKind::kGridNav}) {
    for (std::uint64_t seed = 0; seed < 300; ++seed) {
      const auto t = generate(kind, Difficulty{}, seed);
      for (int tk : oracle_thought(t)) EXPECT_FALSE(is_structural(tk));
      EXPECT_NO_THROW(render(oracle_thought(t), answer_tokens(t.truth)));
    }
  }
}

TEST(TaskProperties, ClickCoordinatesAreNormalized) {
  for (std::uint64_t seed = 0; seed < 2000; ++seed) {
    const auto t = generate(TaskKind::kGridNav, Difficulty{}, seed);
    const auto& a = std::get<AgentAction>(t.truth);
    EXPECT_EQ(a.position.has_value(), a.type == ActionType::kClick);
    if (a.position) {
      EXPECT_GE(a.position->x, 0.0);
      EXPECT_LE(a.position->x, 1.0);
      EXPECT_GE(a.position->y, 0.0);
      EXPECT_LE(a.position->y, 1.0);
    }
  }
}

TEST(Trajectory, FollowsTheOracleToTheClick) {
  const GridState start = grid(5, 4, {0, 0}, {3, 2});
  const auto states = oracle_trajectory(start);
  ASSERT_EQ(states.size(), 6u);  // 3 right, 2 down, click
  EXPECT_EQ(states.front().agent, start.agent);
  EXPECT_EQ(states.back().agent, start.goal);
  for (std::size_t i = 0; i + 1 < states.size(); ++i) {
    EXPECT_EQ(grid_step(states[i], oracle_action(states[i])).agent, states[i + 1].agent);
  }
  EXPECT_EQ(oracle_action(states.back()).type, ActionType::kClick);
}

TEST(Trajectory, ReachShortensTheEpisode) {
  EXPECT_EQ(oracle_trajectory(grid(5, 5, {0, 0}, {2, 0}, 1)).size(), 2u);
  EXPECT_EQ(oracle_trajectory(grid(5, 5, {2, 2}, {2, 2})).size(), 1u);
}

TEST(TrainingTasks, NonGridKindsMatchGenerate) {
  const auto tasks = training_tasks(TaskKind::kChainArith, Difficulty{}, 20, 100);
  ASSERT_EQ(tasks.size(), 20u);
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    EXPECT_EQ(tasks[i].prompt, generate(TaskKind::kChainArith, Difficulty{}, 100 + i).prompt);
  }
}

TEST(TrainingTasks, GridFlattensOracleEpisodes) {
  const int n = 50;
  const auto tasks = training_tasks(TaskKind::kGridNav, Difficulty{}, n, 7);
  ASSERT_EQ(tasks.size(), static_cast<std::size_t>(n));
  std::size_t k = 0;
  for (std::uint64_t seed = 7; k < tasks.size(); ++seed) {
    const auto start = std::get<GridState>(generate(TaskKind::kGridNav, Difficulty{}, seed).meta);
    for (const GridState& g : oracle_trajectory(start)) {
      if (k == tasks.size()) break;
      const auto& t = tasks[k++];
      const auto& meta = std::get<GridState>(t.meta);
      EXPECT_EQ(meta.agent, g.agent);
      EXPECT_EQ(meta.step_index, 0);
      EXPECT_EQ(t.seed, seed);
      EXPECT_EQ(answer_to_json(t.truth), answer_to_json(Answer{oracle_action(g)}));
    }
  }
}

TEST(TrainingTasks, EmptyRequest) {
  EXPECT_TRUE(training_tasks(TaskKind::kGridNav, Difficulty{}, 0, 1).empty());
}

}  // namespace
}  // namespace ton
