#pragma once

// Synthetic task families, their oracle answers and thoughts, and the grid
// navigation environment.
//
// Prompt encodings (one token per item):
//   Count       BOS <count> target SEP item... SEP
//   ChainArith  BOS <arith> start op [k] op [k] ... SEP     (op: add k | sub k | dbl)
//   GridNav     BOS <grid> W H reach AGENT ax ay GOAL gx gy SEP
// Any prompt may be prefixed with the hybrid hint token.

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ton/grammar.hpp"

namespace ton {

enum class TaskKind { kCount, kChainArith, kGridNav };

std::string_view to_string(TaskKind kind);
// Accepts "count", "chain_arith", "grid_nav". Throws std::invalid_argument.
TaskKind task_kind_from_string(std::string_view name);

enum class ActionType { kUp, kDown, kLeft, kRight, kClick, kStop };

std::string_view to_string(ActionType type);
int action_token(ActionType type);
std::optional<ActionType> action_from_token(int token);

struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

// Axis-aligned, x1 <= x2 and y1 <= y2.
struct Box {
  double x1 = 0.0, y1 = 0.0, x2 = 0.0, y2 = 0.0;
  bool operator==(const Box&) const = default;
};

struct NumberAnswer {
  long value = 0;
  bool operator==(const NumberAnswer&) const = default;
};

struct AgentAction {
  ActionType type = ActionType::kStop;
  std::vector<int> value;         // free-form argument tokens, unused by GridNav
  std::optional<Point> position;  // present iff type == kClick
  std::optional<Box> box;         // optional target region for CLICK truths
  bool operator==(const AgentAction&) const = default;
};

using Answer = std::variant<NumberAnswer, AgentAction>;

class DifficultyError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Inclusive ranges. Only the fields for the generated kind are consulted.
struct Difficulty {
  int min_items = 3, max_items = 15;  // Count
  int min_ops = 3, max_ops = 8;       // ChainArith
  int min_grid = 5, max_grid = 9;     // GridNav, both sides

  // Throws DifficultyError when outside the supported ranges.
  void validate(TaskKind kind) const;
  bool operator==(const Difficulty&) const = default;
};

struct CountMeta {
  int target = 0;          // symbol index 0..3
  std::vector<int> items;  // symbol indices
  bool operator==(const CountMeta&) const = default;
};

enum class ArithOpKind { kAdd, kSub, kDouble };

struct ArithOp {
  ArithOpKind kind = ArithOpKind::kAdd;
  int operand = 0;  // 1..9 for add/sub, 0 for dbl
  bool operator==(const ArithOp&) const = default;
};

struct ArithMeta {
  int start = 0;
  std::vector<ArithOp> ops;
  bool operator==(const ArithMeta&) const = default;
};

struct Cell {
  int x = 0;
  int y = 0;  // y grows downward
  bool operator==(const Cell&) const = default;
};

struct GridState {
  int width = 5, height = 5;
  Cell agent, goal;
  // A CLICK succeeds only when the Manhattan distance to the goal is at
  // most this many cells (0 or 1).
  int click_reach = 0;
  int step_index = 0;
  bool done = false;
  bool success = false;

  int budget() const { return 2 * (width + height); }
  bool operator==(const GridState&) const = default;
};

using TaskMeta = std::variant<CountMeta, ArithMeta, GridState>;

struct TaskInstance {
  TaskKind kind = TaskKind::kCount;
  std::uint64_t seed = 0;
  Difficulty difficulty;
  bool hybrid = false;
  std::vector<int> prompt;
  Answer truth;
  TaskMeta meta;
};

// Pure function of its arguments.
TaskInstance generate(TaskKind kind, const Difficulty& difficulty, std::uint64_t seed,
                      bool hybrid = false);
// Wraps an existing meta (for example a mid-episode grid state).
TaskInstance make_instance(const TaskMeta& meta, bool hybrid = false);

TaskKind kind_of(const TaskMeta& meta);
std::vector<int> encode_prompt(const TaskMeta& meta, bool hybrid);
// Inverse of encode_prompt; step_index and done are not encoded. Throws
// std::invalid_argument on malformed prompts.
TaskMeta decode_prompt(std::span<const int> prompt);

Answer oracle_answer(const TaskMeta& meta);
std::vector<int> oracle_thought(const TaskInstance& instance);

// Answer segment tokens. Numbers are decimal digits; actions are the action
// token, followed for CLICK by x and y in hundredths (two digits each).
std::vector<int> answer_tokens(const Answer& answer);
// nullopt when the segment does not encode an answer for this kind.
std::optional<Answer> decode_answer(TaskKind kind, std::span<const int> tokens);

int apply_op(int value, const ArithOp& op);
// Oracle-optimal action: horizontal moves first, then vertical; CLICK on the
// goal centre once within click_reach.
AgentAction oracle_action(const GridState& state);
Point cell_center(const GridState& state, Cell cell);
Box cell_box(const GridState& state, Cell cell);

// States the oracle passes through from start, start included, ending with
// the state in which it clicks the goal.
std::vector<GridState> oracle_trajectory(const GridState& start);

class EnvironmentError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Movement clamps at walls; CLICK inside the goal cell box while within
// click_reach ends the episode with success; any other CLICK is a wasted
// step; STOP ends it with failure. Throws EnvironmentError on a done state.
GridState grid_step(const GridState& state, const AgentAction& action);

// Training instances from seeds seed, seed+1, ... For GridNav every state of
// a seed's oracle episode is its own instance (step-level agent data), so
// fewer seeds reach n. The result always has exactly n instances.
std::vector<TaskInstance> training_tasks(TaskKind kind, const Difficulty& difficulty, int n,
                                         std::uint64_t seed, bool hybrid = false);

}  // namespace ton
