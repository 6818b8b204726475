#pragma once

// Line-oriented task and corpus files. Each line holds one task:
//
//   {"kind": "count", "seed": 7, "difficulty": {...}, "hybrid": false,
//    "prompt_tokens": [...], "truth": {"value": 3},
//    "thought_tokens": [...], "answer_tokens": [...], "base_correct": null}
//
// Token arrays are ids. The prompt is authoritative and the truth is checked
// against it; thought and answer are the oracle's, and base_correct is
// filled in by a probe run when known. Agent truths are written as
// {"action": "click", "position": [x, y]}.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ton/sft.hpp"
#include "ton/tasks.hpp"

namespace ton {

struct TaskRecord {
  TaskInstance task;
  std::vector<int> thought;
  std::vector<int> answer;
  std::optional<bool> base_correct;
};

TaskRecord make_task_record(const TaskInstance& task);
std::string answer_to_json(const Answer& answer);
// Throws std::invalid_argument.
Answer answer_from_json(const std::string& text);
std::string to_json_line(const TaskRecord& record);
// Rebuilds the task from its prompt. Throws std::runtime_error on malformed
// lines.
TaskRecord task_record_from_json(const std::string& line);

SftExample to_sft_example(const TaskRecord& record);

// Throw std::runtime_error naming the file and record on failure.
void write_task_records(const std::string& path, std::span<const TaskRecord> records);
std::vector<TaskRecord> read_task_records(const std::string& path);

// Non-empty lines of a text file. Throws std::runtime_error when unreadable.
std::vector<std::string> read_lines(const std::string& path);

}  // namespace ton
