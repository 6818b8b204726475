#pragma once

// A second, independently written scorer and a generator of mixed
// well-formed, malformed, right and wrong completions. The reference works
// on token names and a regular expression rather than on the library parser.

#include <cmath>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "ton/grammar.hpp"
#include "ton/rewards.hpp"
#include "ton/rng.hpp"
#include "ton/tasks.hpp"

namespace ton::test_support {

struct RewardCase {
  TaskInstance task;
  std::vector<int> completion;
};

struct ReferenceScore {
  int r_f = 0, r_d = 0, r_c = 0;
  bool has_r_c = false;
  double total = 0.0;
};

inline ReferenceScore reference_reward(const TaskInstance& task, const std::vector<int>& completion,
                                       double theta) {
  // Name each token; content tokens become "c<id>" so the pattern below can
  // tell them apart from the tags.
  std::string s;
  for (int t : completion) {
    if (t == tok::kThinkOpen) s += "T";
    else if (t == tok::kThinkClose) s += "t";
    else if (t == tok::kAnswerOpen) s += "A";
    else if (t == tok::kAnswerClose) s += "a";
    else if (t == tok::kEos) s += "E";
    else if (t < 0 || t >= tok::kVocabSize || t == tok::kBos || t == tok::kHybridHint) s += "X";
    else s += "c" + std::to_string(t) + ";";
  }
  ReferenceScore out;
  out.has_r_c = task.kind == TaskKind::kGridNav;
  static const std::regex shape("^T((?:c\\d+;)*)tA((?:c\\d+;)+)aE$");
  std::smatch m;
  if (!std::regex_match(s, m, shape)) return out;
  out.r_f = 1;

  std::vector<int> answer;
  std::istringstream in(m[2].str());
  std::string item;
  while (std::getline(in, item, ';')) answer.push_back(std::stoi(item.substr(1)));

  if (task.kind != TaskKind::kGridNav) {
    // Optional minus, then 1..9 digits.
    std::size_t i = 0;
    bool neg = false;
    if (answer[0] == tok::kMinus) {
      neg = true;
      i = 1;
    }
    const std::size_t digits = answer.size() - i;
    bool ok = digits >= 1 && digits <= 9;
    long v = 0;
    for (; ok && i < answer.size(); ++i) {
      if (answer[i] < tok::digit(0) || answer[i] > tok::digit(9)) ok = false;
      else v = v * 10 + (answer[i] - tok::digit(0));
    }
    if (ok && (neg ? -v : v) == std::get<NumberAnswer>(task.truth).value) out.r_d = 1;
  } else {
    const auto& truth = std::get<AgentAction>(task.truth);
    const int want = action_token(truth.type);
    const int first = answer[0];
    const bool is_action = first >= tok::kUp && first <= tok::kStop;
    bool well_formed = is_action && (first == tok::kClick || answer.size() == 1);
    if (well_formed && first == want) {
      out.r_d = 1;
      if (first == tok::kClick && answer.size() == 5) {
        bool digits = true;
        for (std::size_t k = 1; k < 5; ++k) {
          digits = digits && answer[k] >= tok::digit(0) && answer[k] <= tok::digit(9);
        }
        if (digits && truth.position) {
          const double x = ((answer[1] - tok::digit(0)) * 10 + (answer[2] - tok::digit(0))) / 100.0;
          const double y = ((answer[3] - tok::digit(0)) * 10 + (answer[4] - tok::digit(0))) / 100.0;
          if (truth.box) {
            const Box& b = *truth.box;
            if (b.x1 <= x && x <= b.x2 && b.y1 <= y && y <= b.y2) out.r_c = 1;
          } else {
            const double dx = x - truth.position->x, dy = y - truth.position->y;
            if (std::sqrt(dx * dx + dy * dy) <= theta) out.r_c = 1;
          }
        }
      }
    }
  }
  out.total = out.r_f + out.r_d + out.r_c;
  return out;
}

// Random task plus a completion that is right, nearly right, wrong, or
// malformed in one of several ways.
inline RewardCase random_reward_case(Rng& rng) {
  const auto kind = static_cast<TaskKind>(rng.below(3));
  RewardCase c;
  c.task = generate(kind, Difficulty{}, rng.next());
  if (kind == TaskKind::kGridNav && rng.below(2)) {
    // Put the agent within reach so CLICK truths are common.
    auto g = std::get<GridState>(c.task.meta);
    g.agent = g.goal;
    c.task = make_instance(g);
  }
  std::vector<int> answer = answer_tokens(c.task.truth);

  switch (rng.below(5)) {
    case 0: break;  // correct
    case 1:         // perturb one answer token
      answer[rng.below(answer.size())] = static_cast<int>(rng.below(tok::kVocabSize));
      break;
    case 2:  // nearby click or other action
      if (kind == TaskKind::kGridNav) {
        answer = {tok::kClick};
        for (int k = 0; k < 4; ++k) answer.push_back(tok::digit(static_cast<int>(rng.below(10))));
        if (rng.below(2)) answer.resize(1 + rng.below(5));
      } else {
        answer.push_back(tok::digit(static_cast<int>(rng.below(10))));
      }
      break;
    case 3:  // a different value
      answer = {rng.below(2) ? tok::kMinus : tok::digit(1), tok::digit(static_cast<int>(rng.below(10)))};
      break;
    default:  // random content
      answer.assign(rng.below(4), 0);
      for (int& t : answer) t = static_cast<int>(rng.below(tok::kVocabSize));
      break;
  }

  std::vector<int> thought;
  if (rng.below(2)) {
    thought = {tok::kSkip};
  } else {
    thought = oracle_thought(c.task);
  }
  // Build by hand so structural tokens in the answer survive.
  c.completion = {tok::kThinkOpen};
  c.completion.insert(c.completion.end(), thought.begin(), thought.end());
  c.completion.push_back(tok::kThinkClose);
  c.completion.push_back(tok::kAnswerOpen);
  c.completion.insert(c.completion.end(), answer.begin(), answer.end());
  c.completion.push_back(tok::kAnswerClose);
  c.completion.push_back(tok::kEos);

  // Occasionally break the frame itself.
  switch (rng.below(8)) {
    case 0: c.completion.pop_back(); break;
    case 1: c.completion.erase(c.completion.begin()); break;
    case 2: c.completion.push_back(tok::digit(0)); break;
    case 3: std::swap(c.completion.front(), c.completion[c.completion.size() - 3]); break;
    default: break;
  }
  return c;
}

}  // namespace ton::test_support
