#include "ton/evaluate.hpp"

#include <json.hpp>
#include <stdexcept>

namespace ton {

namespace {

struct Tally {
  long responses = 0;
  long skips = 0;
  long formatted = 0;
  long tokens = 0;
};

struct Decoded {
  std::size_t length = 0;
  ParseResult parse;
  std::optional<Answer> answer;
};

Decoded decode_greedy(const PolicyParams& params, const TaskInstance& task, int max_completion,
                      Tally& tally) {
  DecodingConfig dc;
  dc.greedy = true;
  dc.max_new_tokens = max_completion;
  const Completion c = sample(params, task.prompt, dc, 0);
  Decoded d{c.tokens.size(), parse(c.tokens), std::nullopt};
  if (const auto* resp = std::get_if<Response>(&d.parse)) {
    ++tally.formatted;
    if (resp->is_skip) ++tally.skips;
    d.answer = decode_answer(task.kind, resp->answer);
  }
  ++tally.responses;
  tally.tokens += static_cast<long>(d.length);
  return d;
}

double ratio(long num, long den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

EvalReport evaluate(const PolicyParams& params, TaskKind kind, int n, std::uint64_t seed,
                    const EvalOptions& options) {
  if (n < 1) throw std::invalid_argument("evaluate: n must be >= 1");
  options.difficulty.validate(kind);
  options.reward.validate();

  EvalReport report;
  report.kind = kind;
  report.n_examples = n;
  Tally tally;

  if (kind != TaskKind::kGridNav) {
    long correct = 0;
    for (int i = 0; i < n; ++i) {
      const TaskInstance task =
          generate(kind, options.difficulty, seed + static_cast<std::uint64_t>(i), options.hybrid);
      const Decoded d = decode_greedy(params, task, options.max_completion, tally);
      correct += composite_reward(kind, d.parse, d.answer, task.truth, options.reward).r_d;
    }
    report.accuracy = ratio(correct, n);
  } else {
    long type_hits = 0, exact_hits = 0, successes = 0;
    for (int i = 0; i < n; ++i) {
      const TaskInstance start = generate(kind, options.difficulty,
                                          seed + static_cast<std::uint64_t>(i), options.hybrid);
      GridState state = std::get<GridState>(start.meta);
      while (!state.done) {
        const TaskInstance task = make_instance(state, options.hybrid);
        const Decoded d = decode_greedy(params, task, options.max_completion, tally);
        const AgentAction want = oracle_action(state);
        const AgentAction* got = d.answer ? std::get_if<AgentAction>(&*d.answer) : nullptr;
        if (got && got->type == want.type) {
          ++type_hits;
          if (want.type != ActionType::kClick ||
              (got->position && point_near(*got->position, *want.position, options.reward.theta))) {
            ++exact_hits;
          }
        }
        if (got) {
          state = grid_step(state, *got);
        } else {
          ++state.step_index;
          if (state.step_index >= state.budget()) state.done = true;
        }
      }
      if (state.success) ++successes;
    }
    report.type_acc = ratio(type_hits, tally.responses);
    report.exact_acc = ratio(exact_hits, tally.responses);
    report.task_success = ratio(successes, n);
  }

  report.n_steps = static_cast<int>(tally.responses);
  report.mean_output_len = ratio(tally.tokens, tally.responses);
  report.mean_task_output_len = ratio(tally.tokens, n);
  report.skip_ratio = ratio(tally.skips, tally.responses);
  report.format_rate = ratio(tally.formatted, tally.responses);
  return report;
}

std::string to_json(const EvalReport& r) {
  auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
  };
  nlohmann::ordered_json j;
  j["kind"] = std::string(to_string(r.kind));
  j["n_examples"] = r.n_examples;
  j["accuracy"] = opt(r.accuracy);
  j["type_acc"] = opt(r.type_acc);
  j["exact_acc"] = opt(r.exact_acc);
  j["task_success"] = opt(r.task_success);
  j["n_steps"] = r.n_steps;
  j["mean_output_len"] = r.mean_output_len;
  j["mean_task_output_len"] = r.mean_task_output_len;
  j["skip_ratio"] = r.skip_ratio;
  j["format_rate"] = r.format_rate;
  return j.dump(2);
}

EvalReport eval_report_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    auto opt = [&](const char* key) -> std::optional<double> {
      const auto& v = j.at(key);
      if (v.is_null()) return std::nullopt;
      return v.get<double>();
    };
    EvalReport r;
    r.kind = task_kind_from_string(j.at("kind").get<std::string>());
    r.n_examples = j.at("n_examples").get<int>();
    r.accuracy = opt("accuracy");
    r.type_acc = opt("type_acc");
    r.exact_acc = opt("exact_acc");
    r.task_success = opt("task_success");
    r.n_steps = j.at("n_steps").get<int>();
    r.mean_output_len = j.at("mean_output_len").get<double>();
    r.mean_task_output_len = j.at("mean_task_output_len").get<double>();
    r.skip_ratio = j.at("skip_ratio").get<double>();
    r.format_rate = j.at("format_rate").get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("eval report: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("eval report: ") + e.what());
  }
}

}  // namespace ton
