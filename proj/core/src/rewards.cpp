#include "ton/rewards.hpp"

#include <cmath>
#include <stdexcept>

namespace ton {

void RewardConfig::validate() const {
  if (!(theta > 0.0)) throw std::invalid_argument("RewardConfig: theta must be > 0");
  if (format_weight < 0.0 || discrete_weight < 0.0 || continuous_weight < 0.0) {
    throw std::invalid_argument("RewardConfig: weights must be >= 0");
  }
}

int discrete_reward(const Answer& pred, const Answer& truth) {
  if (pred.index() != truth.index()) return 0;
  if (const auto* n = std::get_if<NumberAnswer>(&pred)) {
    return n->value == std::get<NumberAnswer>(truth).value ? 1 : 0;
  }
  return std::get<AgentAction>(pred).type == std::get<AgentAction>(truth).type ? 1 : 0;
}

int point_in_box(Point p, const Box& b) {
  if (b.x1 > b.x2 || b.y1 > b.y2) throw std::invalid_argument("point_in_box: inverted box");
  return (b.x1 <= p.x && p.x <= b.x2 && b.y1 <= p.y && p.y <= b.y2) ? 1 : 0;
}

int point_near(Point p, Point target, double theta) {
  return std::hypot(p.x - target.x, p.y - target.y) <= theta ? 1 : 0;
}

RewardBreakdown composite_reward(TaskKind kind, const ParseResult& parse_result,
                                 const std::optional<Answer>& pred, const Answer& truth,
                                 const RewardConfig& cfg) {
  RewardBreakdown r;
  const bool agent = kind == TaskKind::kGridNav;
  if (agent) r.r_c = 0;
  r.r_f = format_reward(parse_result);
  if (r.r_f == 1 && pred) {
    r.r_d = discrete_reward(*pred, truth);
    if (agent && r.r_d == 1) {
      const auto& t = std::get<AgentAction>(truth);
      const auto& a = std::get<AgentAction>(*pred);
      if (t.type == ActionType::kClick && t.position && a.position) {
        r.r_c = t.box ? point_in_box(*a.position, *t.box)
                      : point_near(*a.position, *t.position, cfg.theta);
      }
    }
  }
  r.total = cfg.format_weight * r.r_f + cfg.discrete_weight * r.r_d +
            cfg.continuous_weight * r.r_c.value_or(0);
  return r;
}

RewardBreakdown score_completion(const TaskInstance& task, std::span<const int> completion,
                                 const RewardConfig& cfg) {
  const ParseResult pr = parse(completion);
  std::optional<Answer> pred;
  if (const auto* resp = std::get_if<Response>(&pr)) pred = decode_answer(task.kind, resp->answer);
  return composite_reward(task.kind, pr, pred, task.truth, cfg);
}

}  // namespace ton
