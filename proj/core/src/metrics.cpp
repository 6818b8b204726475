#include "ton/metrics.hpp"

#include <cmath>
#include <json.hpp>
#include <stdexcept>

namespace ton {

double skip_ratio(std::span<const ParseResult> responses) {
  if (responses.empty()) return 0.0;
  std::size_t skips = 0;
  for (const auto& r : responses) {
    if (const auto* resp = std::get_if<Response>(&r); resp && resp->is_skip) ++skips;
  }
  return static_cast<double>(skips) / static_cast<double>(responses.size());
}

StepRecord make_step_record(int step, std::span<const double> rewards,
                            std::span<const ParseResult> responses,
                            std::span<const std::size_t> lengths, double kl_mean) {
  if (rewards.size() != responses.size() || rewards.size() != lengths.size()) {
    throw std::invalid_argument("make_step_record: mismatched input lengths");
  }
  StepRecord r;
  r.step = step;
  r.kl_mean = kl_mean;
  const auto n = static_cast<double>(rewards.size());
  if (rewards.empty()) return r;

  double sum = 0.0;
  for (double v : rewards) sum += v;
  r.reward_mean = sum / n;
  double var = 0.0;
  for (double v : rewards) var += (v - r.reward_mean) * (v - r.reward_mean);
  r.reward_std = std::sqrt(var / n);

  std::size_t formatted = 0, think_count = 0;
  double len_sum = 0.0, think_len_sum = 0.0;
  for (std::size_t i = 0; i < responses.size(); ++i) {
    const auto* resp = std::get_if<Response>(&responses[i]);
    if (resp) ++formatted;
    len_sum += static_cast<double>(lengths[i]);
    if (!(resp && resp->is_skip)) {
      ++think_count;
      think_len_sum += static_cast<double>(lengths[i]);
    }
  }
  r.skip_ratio = skip_ratio(responses);
  r.format_rate = static_cast<double>(formatted) / n;
  r.completion_len_mean = len_sum / n;
  if (think_count > 0) r.think_len_mean = think_len_sum / static_cast<double>(think_count);
  return r;
}

std::string to_json_line(const StepRecord& r) {
  nlohmann::ordered_json j;
  j["step"] = r.step;
  j["reward_mean"] = r.reward_mean;
  j["reward_std"] = r.reward_std;
  j["skip_ratio"] = r.skip_ratio;
  j["completion_len_mean"] = r.completion_len_mean;
  j["think_len_mean"] = r.think_len_mean ? nlohmann::ordered_json(*r.think_len_mean) : nullptr;
  j["kl_mean"] = r.kl_mean;
  j["format_rate"] = r.format_rate;
  return j.dump();
}

StepRecord step_record_from_json(std::string_view line) {
  try {
    const auto j = nlohmann::json::parse(line);
    StepRecord r;
    r.step = j.at("step").get<int>();
    r.reward_mean = j.at("reward_mean").get<double>();
    r.reward_std = j.at("reward_std").get<double>();
    r.skip_ratio = j.at("skip_ratio").get<double>();
    r.completion_len_mean = j.at("completion_len_mean").get<double>();
    if (!j.at("think_len_mean").is_null()) r.think_len_mean = j.at("think_len_mean").get<double>();
    r.kl_mean = j.at("kl_mean").get<double>();
    r.format_rate = j.at("format_rate").get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("step record: ") + e.what());
  }
}

}  // namespace ton
