#include "ton/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "ton/rng.hpp"

namespace ton {

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::kCount: return "count";
    case TaskKind::kChainArith: return "chain_arith";
    case TaskKind::kGridNav: return "grid_nav";
  }
  return "unknown";
}

TaskKind task_kind_from_string(std::string_view name) {
  if (name == "count") return TaskKind::kCount;
  if (name == "chain_arith") return TaskKind::kChainArith;
  if (name == "grid_nav") return TaskKind::kGridNav;
  throw std::invalid_argument("unknown task kind: " + std::string(name));
}

std::string_view to_string(ActionType type) { return token_name(action_token(type)); }

int action_token(ActionType type) {
  switch (type) {
    case ActionType::kUp: return tok::kUp;
    case ActionType::kDown: return tok::kDown;
    case ActionType::kLeft: return tok::kLeft;
    case ActionType::kRight: return tok::kRight;
    case ActionType::kClick: return tok::kClick;
    case ActionType::kStop: return tok::kStop;
  }
  return tok::kStop;
}

std::optional<ActionType> action_from_token(int token) {
  switch (token) {
    case tok::kUp: return ActionType::kUp;
    case tok::kDown: return ActionType::kDown;
    case tok::kLeft: return ActionType::kLeft;
    case tok::kRight: return ActionType::kRight;
    case tok::kClick: return ActionType::kClick;
    case tok::kStop: return ActionType::kStop;
    default: return std::nullopt;
  }
}

void Difficulty::validate(TaskKind kind) const {
  auto check = [](int lo, int hi, int min_allowed, int max_allowed, const char* what) {
    if (lo < min_allowed || hi > max_allowed || lo > hi) {
      throw DifficultyError(std::string(what) + " range [" + std::to_string(lo) + ", " +
                            std::to_string(hi) + "] outside [" + std::to_string(min_allowed) +
                            ", " + std::to_string(max_allowed) + "]");
    }
  };
  switch (kind) {
    case TaskKind::kCount: check(min_items, max_items, 3, 15, "item count"); break;
    case TaskKind::kChainArith: check(min_ops, max_ops, 3, 8, "operation count"); break;
    case TaskKind::kGridNav: check(min_grid, max_grid, 5, 9, "grid side"); break;
  }
}

// ---------------------------------------------------------------- encoding

namespace {

void push_number(std::vector<int>& out, long v) {
  if (v < 0) {
    out.push_back(tok::kMinus);
    v = -v;
  }
  const std::string s = std::to_string(v);
  for (char c : s) out.push_back(tok::digit(c - '0'));
}

int op_token(ArithOpKind k) {
  switch (k) {
    case ArithOpKind::kAdd: return tok::kOpAdd;
    case ArithOpKind::kSub: return tok::kOpSub;
    case ArithOpKind::kDouble: return tok::kOpDouble;
  }
  return tok::kOpAdd;
}

void push_op(std::vector<int>& out, const ArithOp& op) {
  out.push_back(op_token(op.kind));
  if (op.kind != ArithOpKind::kDouble) out.push_back(tok::digit(op.operand));
}

int quantize_hundredths(double v) { return static_cast<int>(std::lround(v * 100.0)); }

[[noreturn]] void bad_prompt(const std::string& why, std::span<const int> prompt) {
  throw std::invalid_argument("decode_prompt: " + why + " in [" + detokenize(prompt) + "]");
}

}  // namespace

TaskKind kind_of(const TaskMeta& meta) {
  switch (meta.index()) {
    case 0: return TaskKind::kCount;
    case 1: return TaskKind::kChainArith;
    default: return TaskKind::kGridNav;
  }
}

std::vector<int> encode_prompt(const TaskMeta& meta, bool hybrid) {
  std::vector<int> out;
  if (hybrid) out.push_back(tok::kHybridHint);
  out.push_back(tok::kBos);
  if (const auto* c = std::get_if<CountMeta>(&meta)) {
    out.push_back(tok::kTaskCount);
    out.push_back(tok::symbol(c->target));
    out.push_back(tok::kSep);
    for (int s : c->items) out.push_back(tok::symbol(s));
  } else if (const auto* a = std::get_if<ArithMeta>(&meta)) {
    out.push_back(tok::kTaskArith);
    out.push_back(tok::digit(a->start));
    for (const ArithOp& op : a->ops) push_op(out, op);
  } else {
    const auto& g = std::get<GridState>(meta);
    out.insert(out.end(), {tok::kTaskGrid, tok::digit(g.width), tok::digit(g.height),
                           tok::digit(g.click_reach), tok::kAgent, tok::digit(g.agent.x),
                           tok::digit(g.agent.y), tok::kGoal, tok::digit(g.goal.x),
                           tok::digit(g.goal.y)});
  }
  out.push_back(tok::kSep);
  return out;
}

TaskMeta decode_prompt(std::span<const int> prompt) {
  std::size_t i = 0;
  if (i < prompt.size() && prompt[i] == tok::kHybridHint) ++i;
  if (i >= prompt.size() || prompt[i] != tok::kBos) bad_prompt("missing <bos>", prompt);
  ++i;
  if (prompt.empty() || prompt.back() != tok::kSep) bad_prompt("missing final <sep>", prompt);
  const std::size_t end = prompt.size() - 1;
  if (i >= end) bad_prompt("missing task marker", prompt);
  const int marker = prompt[i++];
  auto digit_at = [&](std::size_t k) {
    if (k >= end || !tok::is_digit(prompt[k])) bad_prompt("expected digit", prompt);
    return tok::digit_value(prompt[k]);
  };

  if (marker == tok::kTaskCount) {
    CountMeta c;
    if (i + 1 >= end || !tok::is_symbol(prompt[i]) || prompt[i + 1] != tok::kSep) {
      bad_prompt("malformed count header", prompt);
    }
    c.target = prompt[i] - tok::kSymbol0;
    for (std::size_t k = i + 2; k < end; ++k) {
      if (!tok::is_symbol(prompt[k])) bad_prompt("expected symbol", prompt);
      c.items.push_back(prompt[k] - tok::kSymbol0);
    }
    return c;
  }
  if (marker == tok::kTaskArith) {
    ArithMeta a;
    a.start = digit_at(i++);
    while (i < end) {
      ArithOp op;
      const int t = prompt[i++];
      if (t == tok::kOpDouble) {
        op.kind = ArithOpKind::kDouble;
      } else if (t == tok::kOpAdd || t == tok::kOpSub) {
        op.kind = t == tok::kOpAdd ? ArithOpKind::kAdd : ArithOpKind::kSub;
        op.operand = digit_at(i++);
      } else {
        bad_prompt("expected operation", prompt);
      }
      a.ops.push_back(op);
    }
    return a;
  }
  if (marker == tok::kTaskGrid) {
    if (end - i != 9 || prompt[i + 3] != tok::kAgent || prompt[i + 6] != tok::kGoal) {
      bad_prompt("malformed grid description", prompt);
    }
    GridState g;
    g.width = digit_at(i);
    g.height = digit_at(i + 1);
    g.click_reach = digit_at(i + 2);
    g.agent = {digit_at(i + 4), digit_at(i + 5)};
    g.goal = {digit_at(i + 7), digit_at(i + 8)};
    return g;
  }
  bad_prompt("unknown task marker", prompt);
}

// ---------------------------------------------------------------- oracles

int apply_op(int value, const ArithOp& op) {
  switch (op.kind) {
    case ArithOpKind::kAdd: return (value + op.operand) % 10;
    case ArithOpKind::kSub: return ((value - op.operand) % 10 + 10) % 10;
    case ArithOpKind::kDouble: return (value * 2) % 10;
  }
  return value;
}

Point cell_center(const GridState& s, Cell c) {
  return {(c.x + 0.5) / s.width, (c.y + 0.5) / s.height};
}

Box cell_box(const GridState& s, Cell c) {
  return {static_cast<double>(c.x) / s.width, static_cast<double>(c.y) / s.height,
          static_cast<double>(c.x + 1) / s.width, static_cast<double>(c.y + 1) / s.height};
}

namespace {

int manhattan(Cell a, Cell b) { return std::abs(a.x - b.x) + std::abs(a.y - b.y); }

// The click point as it survives answer encoding.
Point quantized_center(const GridState& s, Cell c) {
  const Point p = cell_center(s, c);
  return {quantize_hundredths(p.x) / 100.0, quantize_hundredths(p.y) / 100.0};
}

}  // namespace

AgentAction oracle_action(const GridState& s) {
  AgentAction a;
  if (manhattan(s.agent, s.goal) <= s.click_reach) {
    a.type = ActionType::kClick;
    a.position = quantized_center(s, s.goal);
    return a;
  }
  if (s.agent.x < s.goal.x) {
    a.type = ActionType::kRight;
  } else if (s.agent.x > s.goal.x) {
    a.type = ActionType::kLeft;
  } else if (s.agent.y < s.goal.y) {
    a.type = ActionType::kDown;
  } else {
    a.type = ActionType::kUp;
  }
  return a;
}

std::vector<GridState> oracle_trajectory(const GridState& start) {
  std::vector<GridState> out;
  GridState s = start;
  while (!s.done && s.step_index < s.budget()) {
    out.push_back(s);
    s = grid_step(s, oracle_action(s));
  }
  return out;
}

Answer oracle_answer(const TaskMeta& meta) {
  if (const auto* c = std::get_if<CountMeta>(&meta)) {
    long k = 0;
    for (int s : c->items) k += s == c->target ? 1 : 0;
    return NumberAnswer{k};
  }
  if (const auto* a = std::get_if<ArithMeta>(&meta)) {
    int v = a->start;
    for (const ArithOp& op : a->ops) v = apply_op(v, op);
    return NumberAnswer{v};
  }
  return oracle_action(std::get<GridState>(meta));
}

std::vector<int> oracle_thought(const TaskInstance& instance) {
  std::vector<int> out;
  if (const auto* c = std::get_if<CountMeta>(&instance.meta)) {
    // A scan of the scene: every item in order, each target occurrence
    // followed by the running tally.
    long k = 0;
    for (int s : c->items) {
      out.push_back(tok::symbol(s));
      if (s == c->target) push_number(out, ++k);
    }
    return out;
  }
  if (const auto* a = std::get_if<ArithMeta>(&instance.meta)) {
    // Each operation restated, followed by the value it produces.
    int v = a->start;
    for (const ArithOp& op : a->ops) {
      v = apply_op(v, op);
      push_op(out, op);
      out.push_back(tok::digit(v));
    }
    return out;
  }
  const auto& g = std::get<GridState>(instance.meta);
  out.insert(out.end(), {tok::kAgent, tok::digit(g.agent.x), tok::digit(g.agent.y), tok::kGoal,
                         tok::digit(g.goal.x), tok::digit(g.goal.y)});
  if (g.agent == g.goal) {
    out.push_back(tok::kAtGoal);
    return out;
  }
  const int dx = g.goal.x - g.agent.x;
  const int dy = g.goal.y - g.agent.y;
  if (dx != 0) {
    out.push_back(dx > 0 ? tok::kRight : tok::kLeft);
    out.push_back(tok::digit(std::abs(dx)));
  }
  if (dy != 0) {
    out.push_back(dy > 0 ? tok::kDown : tok::kUp);
    out.push_back(tok::digit(std::abs(dy)));
  }
  return out;
}

// ---------------------------------------------------------------- answers

std::vector<int> answer_tokens(const Answer& answer) {
  std::vector<int> out;
  if (const auto* n = std::get_if<NumberAnswer>(&answer)) {
    push_number(out, n->value);
    return out;
  }
  const auto& a = std::get<AgentAction>(answer);
  out.push_back(action_token(a.type));
  if (a.type == ActionType::kClick && a.position) {
    for (double v : {a.position->x, a.position->y}) {
      const int q = std::clamp(quantize_hundredths(v), 0, 99);
      out.push_back(tok::digit(q / 10));
      out.push_back(tok::digit(q % 10));
    }
  }
  out.insert(out.end(), a.value.begin(), a.value.end());
  return out;
}

std::optional<Answer> decode_answer(TaskKind kind, std::span<const int> tokens) {
  if (tokens.empty()) return std::nullopt;
  if (kind != TaskKind::kGridNav) {
    std::size_t i = 0;
    const bool negative = tokens[0] == tok::kMinus;
    if (negative) ++i;
    if (i == tokens.size() || tokens.size() - i > 9) return std::nullopt;
    long v = 0;
    for (; i < tokens.size(); ++i) {
      if (!tok::is_digit(tokens[i])) return std::nullopt;
      v = v * 10 + tok::digit_value(tokens[i]);
    }
    return NumberAnswer{negative ? -v : v};
  }
  const auto type = action_from_token(tokens[0]);
  if (!type) return std::nullopt;
  AgentAction a;
  a.type = *type;
  if (a.type != ActionType::kClick) {
    if (tokens.size() != 1) return std::nullopt;
    return a;
  }
  // A CLICK with malformed coordinates still carries its action type.
  if (tokens.size() == 5 && std::all_of(tokens.begin() + 1, tokens.end(), tok::is_digit)) {
    const int x = tok::digit_value(tokens[1]) * 10 + tok::digit_value(tokens[2]);
    const int y = tok::digit_value(tokens[3]) * 10 + tok::digit_value(tokens[4]);
    a.position = Point{x / 100.0, y / 100.0};
  }
  return a;
}

// ---------------------------------------------------------------- generation

TaskInstance make_instance(const TaskMeta& meta, bool hybrid) {
  TaskInstance t;
  t.kind = kind_of(meta);
  t.hybrid = hybrid;
  t.meta = meta;
  t.prompt = encode_prompt(meta, hybrid);
  t.truth = oracle_answer(meta);
  return t;
}

TaskInstance generate(TaskKind kind, const Difficulty& difficulty, std::uint64_t seed,
                      bool hybrid) {
  difficulty.validate(kind);
  Rng rng(seed);
  TaskMeta meta;
  switch (kind) {
    case TaskKind::kCount: {
      // Draw the answer uniformly first so every count in range is covered.
      CountMeta c;
      const int n = rng.range(difficulty.min_items, difficulty.max_items);
      const int k = rng.range(0, n);
      c.target = rng.range(0, tok::kNumSymbols - 1);
      c.items.assign(static_cast<std::size_t>(n), -1);
      int placed = 0;
      while (placed < k) {
        const auto pos = rng.below(static_cast<std::uint64_t>(n));
        if (c.items[pos] == -1) {
          c.items[pos] = c.target;
          ++placed;
        }
      }
      for (int& s : c.items) {
        if (s != -1) continue;
        s = rng.range(0, tok::kNumSymbols - 2);
        if (s >= c.target) ++s;
      }
      meta = std::move(c);
      break;
    }
    case TaskKind::kChainArith: {
      ArithMeta a;
      a.start = rng.range(0, 9);
      const int n = rng.range(difficulty.min_ops, difficulty.max_ops);
      for (int i = 0; i < n; ++i) {
        ArithOp op;
        op.kind = static_cast<ArithOpKind>(rng.range(0, 2));
        if (op.kind != ArithOpKind::kDouble) op.operand = rng.range(1, 9);
        a.ops.push_back(op);
      }
      meta = std::move(a);
      break;
    }
    case TaskKind::kGridNav: {
      GridState g;
      g.width = rng.range(difficulty.min_grid, difficulty.max_grid);
      g.height = rng.range(difficulty.min_grid, difficulty.max_grid);
      g.click_reach = rng.range(0, 1);
      g.agent = {rng.range(0, g.width - 1), rng.range(0, g.height - 1)};
      g.goal = {rng.range(0, g.width - 1), rng.range(0, g.height - 1)};
      meta = g;
      break;
    }
  }
  TaskInstance t = make_instance(meta, hybrid);
  t.seed = seed;
  t.difficulty = difficulty;
  return t;
}

// ---------------------------------------------------------------- environment

GridState grid_step(const GridState& state, const AgentAction& action) {
  if (state.done) throw EnvironmentError("grid_step: episode already finished");
  GridState next = state;
  ++next.step_index;
  switch (action.type) {
    case ActionType::kUp: next.agent.y = std::max(0, next.agent.y - 1); break;
    case ActionType::kDown: next.agent.y = std::min(next.height - 1, next.agent.y + 1); break;
    case ActionType::kLeft: next.agent.x = std::max(0, next.agent.x - 1); break;
    case ActionType::kRight: next.agent.x = std::min(next.width - 1, next.agent.x + 1); break;
    case ActionType::kStop: next.done = true; break;
    case ActionType::kClick: {
      if (action.position && manhattan(state.agent, state.goal) <= state.click_reach) {
        const Box b = cell_box(state, state.goal);
        const Point p = *action.position;
        if (b.x1 <= p.x && p.x <= b.x2 && b.y1 <= p.y && p.y <= b.y2) {
          next.done = true;
          next.success = true;
        }
      }
      break;
    }
  }
  if (next.step_index >= next.budget()) next.done = true;
  return next;
}

std::vector<TaskInstance> training_tasks(TaskKind kind, const Difficulty& difficulty, int n,
                                         std::uint64_t seed, bool hybrid) {
  std::vector<TaskInstance> out;
  out.reserve(static_cast<std::size_t>(std::max(n, 0)));
  for (std::uint64_t s = seed; static_cast<int>(out.size()) < n; ++s) {
    TaskInstance t = generate(kind, difficulty, s, hybrid);
    if (kind != TaskKind::kGridNav) {
      out.push_back(std::move(t));
      continue;
    }
    for (GridState g : oracle_trajectory(std::get<GridState>(t.meta))) {
      if (static_cast<int>(out.size()) == n) break;
      g.step_index = 0;  // a fresh prompt
      TaskInstance step = make_instance(g, hybrid);
      step.seed = s;
      step.difficulty = difficulty;
      out.push_back(std::move(step));
    }
  }
  return out;
}

}  // namespace ton
