#include "ton/report.hpp"

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <map>
#include <sstream>

#include "ton/jsonl.hpp"

namespace ton {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

RunData load_run(const std::string& run_dir) {
  const fs::path dir(run_dir);
  RunData run;
  run.label = dir.filename().string();
  if (run.label.empty()) run.label = dir.parent_path().filename().string();

  const fs::path steps = dir / "steps.jsonl";
  std::vector<std::string> lines;
  try {
    lines = read_lines(steps.string());
  } catch (const std::runtime_error&) {
    throw SchemaError(steps.string() + ": missing or unreadable");
  }
  for (std::size_t i = 0; i < lines.size(); ++i) {
    try {
      run.steps.push_back(step_record_from_json(lines[i]));
    } catch (const std::runtime_error& e) {
      throw SchemaError(steps.string() + ": record " + std::to_string(i + 1) + ": " + e.what());
    }
  }

  const fs::path summary = dir / "summary.json";
  std::ifstream in(summary);
  if (!in) throw SchemaError(summary.string() + ": missing or unreadable");
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    const auto j = json::parse(buf.str());
    for (const char* key : {"arm", "task", "status", "final_accuracy", "final_length",
                            "final_skip_ratio", "wall_time"}) {
      if (!j.contains(key)) throw SchemaError(std::string("missing field ") + key);
    }
  } catch (const std::exception& e) {
    throw SchemaError(summary.string() + ": " + e.what());
  }
  run.summary_json = buf.str();
  return run;
}

std::vector<double> moving_average(std::span<const double> values, int window) {
  std::vector<double> out(values.size());
  if (window <= 1) {
    std::copy(values.begin(), values.end(), out.begin());
    return out;
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    sum += values[i];
    if (i >= static_cast<std::size_t>(window)) sum -= values[i - static_cast<std::size_t>(window)];
    out[i] = sum / static_cast<double>(std::min<std::size_t>(i + 1, static_cast<std::size_t>(window)));
  }
  return out;
}

ReportOutput report(std::span<const RunData> runs, const ReportOptions& options) {
  if (runs.empty()) throw std::invalid_argument("report: no runs given");

  // Unique labels: repeated names get a numeric suffix.
  std::vector<std::string> labels;
  std::map<std::string, int> seen;
  for (const RunData& r : runs) {
    const int k = seen[r.label]++;
    labels.push_back(k == 0 ? r.label : r.label + "_" + std::to_string(k + 1));
  }

  struct Series {
    std::vector<double> reward, skip, length;
  };
  std::vector<Series> series;
  std::size_t rows = 0;
  for (const RunData& r : runs) {
    Series s;
    for (const StepRecord& rec : r.steps) {
      s.reward.push_back(rec.reward_mean);
      s.skip.push_back(rec.skip_ratio);
      s.length.push_back(rec.completion_len_mean);
    }
    s.reward = moving_average(s.reward, options.moving_average);
    s.skip = moving_average(s.skip, options.moving_average);
    s.length = moving_average(s.length, options.moving_average);
    rows = std::max(rows, r.steps.size());
    series.push_back(std::move(s));
  }

  std::ostringstream csv;
  csv.precision(17);
  csv << "step";
  for (const std::string& l : labels) {
    csv << ',' << l << ".reward_mean," << l << ".skip_ratio," << l << ".completion_len_mean";
  }
  csv << '\n';
  for (std::size_t i = 0; i < rows; ++i) {
    csv << i;
    for (std::size_t k = 0; k < runs.size(); ++k) {
      if (i < runs[k].steps.size()) {
        csv << ',' << series[k].reward[i] << ',' << series[k].skip[i] << ',' << series[k].length[i];
      } else {
        csv << ",null,null,null";
      }
    }
    csv << '\n';
  }

  json summary = json::object();
  for (std::size_t k = 0; k < runs.size(); ++k) {
    const auto s = json::parse(runs[k].summary_json);
    json entry = json::object();
    for (const char* key : {"arm", "task", "status", "final_accuracy", "final_length",
                            "final_skip_ratio", "wall_time"}) {
      entry[key] = s.contains(key) ? s.at(key) : json(nullptr);
    }
    summary[labels[k]] = std::move(entry);
  }
  return {csv.str(), summary.dump(2)};
}

ReportOutput report(std::span<const std::string> run_dirs, const ReportOptions& options) {
  std::vector<RunData> runs;
  for (const std::string& d : run_dirs) runs.push_back(load_run(d));
  return report(runs, options);
}

}  // namespace ton
