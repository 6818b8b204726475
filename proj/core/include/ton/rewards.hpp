#pragma once

// Rule-based outcome rewards. Every component is binary; the total is the
// weighted sum of the applicable components (plain sum at default weights).

#include <optional>

#include "ton/grammar.hpp"
#include "ton/tasks.hpp"

namespace ton {

struct RewardConfig {
  double theta = 0.14;  // click tolerance, normalized coordinates
  double format_weight = 1.0;
  double discrete_weight = 1.0;
  double continuous_weight = 1.0;

  // Throws std::invalid_argument.
  void validate() const;
  bool operator==(const RewardConfig&) const = default;
};

struct RewardBreakdown {
  int r_f = 0;
  int r_d = 0;
  std::optional<int> r_c;  // agent tasks only
  double total = 0.0;

  bool operator==(const RewardBreakdown&) const = default;
};

// Numbers: equal values. Actions: equal action type. Mismatched variants
// score 0.
int discrete_reward(const Answer& pred, const Answer& truth);

// Boundary inclusive. Throws std::invalid_argument when x1 > x2 or y1 > y2.
int point_in_box(Point p, const Box& box);
// 1 iff the Euclidean distance is at most theta.
int point_near(Point p, Point target, double theta);

// A parse failure zeroes every component. r_c is reported for GridNav only
// and can be 1 only when the truth is a CLICK: it checks the box when the
// truth carries one and the theta radius otherwise.
RewardBreakdown composite_reward(TaskKind kind, const ParseResult& parse_result,
                                 const std::optional<Answer>& pred, const Answer& truth,
                                 const RewardConfig& cfg);

// Parses the completion, decodes its answer segment and scores it.
RewardBreakdown score_completion(const TaskInstance& task, std::span<const int> completion,
                                 const RewardConfig& cfg);

}  // namespace ton
