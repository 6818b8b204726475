#include "ton/jsonl.hpp"

#include <fstream>
#include <json.hpp>
#include <stdexcept>

namespace ton {

TaskRecord make_task_record(const TaskInstance& task) {
  return {task, oracle_thought(task), answer_tokens(task.truth), std::nullopt};
}

namespace {

nlohmann::ordered_json difficulty_json(const Difficulty& d) {
  return {{"min_items", d.min_items}, {"max_items", d.max_items}, {"min_ops", d.min_ops},
          {"max_ops", d.max_ops},     {"min_grid", d.min_grid},   {"max_grid", d.max_grid}};
}

Difficulty difficulty_from(const nlohmann::json& j) {
  return {j.at("min_items").get<int>(), j.at("max_items").get<int>(), j.at("min_ops").get<int>(),
          j.at("max_ops").get<int>(),   j.at("min_grid").get<int>(),  j.at("max_grid").get<int>()};
}

}  // namespace

std::string answer_to_json(const Answer& answer) {
  nlohmann::ordered_json j;
  if (const auto* n = std::get_if<NumberAnswer>(&answer)) {
    j["value"] = n->value;
    return j.dump();
  }
  const auto& a = std::get<AgentAction>(answer);
  j["action"] = std::string(to_string(a.type));
  if (a.position) j["position"] = {a.position->x, a.position->y};
  if (a.box) j["box"] = {a.box->x1, a.box->y1, a.box->x2, a.box->y2};
  return j.dump();
}

Answer answer_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.contains("value")) return NumberAnswer{j.at("value").get<long>()};
    AgentAction a;
    const auto name = j.at("action").get<std::string>();
    bool known = false;
    for (ActionType t : {ActionType::kUp, ActionType::kDown, ActionType::kLeft, ActionType::kRight,
                         ActionType::kClick, ActionType::kStop}) {
      if (to_string(t) == name) {
        a.type = t;
        known = true;
      }
    }
    if (!known) throw std::invalid_argument("unknown action " + name);
    if (j.contains("position")) {
      const auto p = j.at("position").get<std::vector<double>>();
      if (p.size() != 2) throw std::invalid_argument("position needs two coordinates");
      a.position = Point{p[0], p[1]};
    }
    if (j.contains("box")) {
      const auto b = j.at("box").get<std::vector<double>>();
      if (b.size() != 4) throw std::invalid_argument("box needs four coordinates");
      a.box = Box{b[0], b[1], b[2], b[3]};
    }
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("answer: ") + e.what());
  }
}

std::string to_json_line(const TaskRecord& r) {
  nlohmann::ordered_json j;
  j["kind"] = std::string(to_string(r.task.kind));
  j["seed"] = r.task.seed;
  j["difficulty"] = difficulty_json(r.task.difficulty);
  j["hybrid"] = r.task.hybrid;
  j["prompt_tokens"] = r.task.prompt;
  j["truth"] = nlohmann::ordered_json::parse(answer_to_json(r.task.truth));
  j["thought_tokens"] = r.thought;
  j["answer_tokens"] = r.answer;
  j["base_correct"] = r.base_correct ? nlohmann::ordered_json(*r.base_correct) : nullptr;
  return j.dump();
}

TaskRecord task_record_from_json(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    const auto prompt = j.at("prompt_tokens").get<std::vector<int>>();
    const bool hybrid = j.at("hybrid").get<bool>();
    TaskRecord r;
    r.task = make_instance(decode_prompt(prompt), hybrid);
    if (r.task.prompt != prompt) throw std::invalid_argument("prompt does not re-encode to itself");
    const TaskKind kind = task_kind_from_string(j.at("kind").get<std::string>());
    if (kind != r.task.kind) throw std::invalid_argument("kind does not match the prompt");
    r.task.seed = j.at("seed").get<std::uint64_t>();
    r.task.difficulty = difficulty_from(j.at("difficulty"));
    if (answer_to_json(r.task.truth) != j.at("truth").dump()) {
      throw std::invalid_argument("truth does not match the prompt");
    }
    r.thought = j.at("thought_tokens").get<std::vector<int>>();
    r.answer = j.at("answer_tokens").get<std::vector<int>>();
    if (j.contains("base_correct") && !j["base_correct"].is_null()) {
      r.base_correct = j["base_correct"].get<bool>();
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("task record: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("task record: ") + e.what());
  }
}

SftExample to_sft_example(const TaskRecord& r) {
  return {r.task.prompt, r.thought, r.answer, r.base_correct};
}

void write_task_records(const std::string& path, std::span<const TaskRecord> records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const TaskRecord& r : records) out << to_json_line(r) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

std::vector<TaskRecord> read_task_records(const std::string& path) {
  std::vector<TaskRecord> out;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    try {
      out.push_back(task_record_from_json(lines[i]));
    } catch (const std::runtime_error& e) {
      throw std::runtime_error(path + ": record " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace ton
