// tonlab: data generation, training, evaluation and reporting.
//
// Exit codes: 0 success, 1 usage or input error, 2 training abort.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "ton/arms.hpp"
#include "ton/evaluate.hpp"
#include "ton/grpo.hpp"
#include "ton/jsonl.hpp"
#include "ton/report.hpp"

namespace fs = std::filesystem;
using namespace ton;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Unrecognized "--a.b value" or "--a.b=value" flags become config overrides.
std::vector<std::pair<std::string, std::string>> parse_overrides(const std::vector<std::string>& extras) {
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& a = extras[i];
    if (a.rfind("--", 0) != 0 || a.size() < 3) throw UsageError("unexpected argument: " + a);
    const std::string body = a.substr(2);
    const auto eq = body.find('=');
    if (eq != std::string::npos) {
      out.emplace_back(body.substr(0, eq), body.substr(eq + 1));
    } else {
      if (i + 1 >= extras.size()) throw UsageError("missing value for " + a);
      out.emplace_back(body, extras[++i]);
    }
  }
  return out;
}

ArmConfig load_config(const std::string& path, const std::vector<std::string>& extras) {
  const std::string text = path.empty() ? std::string() : read_file(path);
  const auto overrides = parse_overrides(extras);
  try {
    return arm_config_from_json(text, overrides);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

Difficulty parse_difficulty(const std::string& text) {
  Difficulty d;
  if (text.empty()) return d;
  try {
    const auto j = nlohmann::json::parse(text);
    for (const auto& [key, value] : j.items()) {
      int* field = key == "min_items" ? &d.min_items
                   : key == "max_items" ? &d.max_items
                   : key == "min_ops"   ? &d.min_ops
                   : key == "max_ops"   ? &d.max_ops
                   : key == "min_grid"  ? &d.min_grid
                   : key == "max_grid"  ? &d.max_grid
                                        : nullptr;
      if (!field) throw UsageError("unknown difficulty field: " + key);
      *field = value.get<int>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("--difficulty: ") + e.what());
  }
  return d;
}

std::vector<int> parse_tokens(const std::string& text) {
  std::vector<int> out;
  std::istringstream in(text);
  std::string name;
  while (in >> name) {
    try {
      out.push_back(token_id(name));
    } catch (const std::out_of_range& e) {
      throw UsageError(e.what());
    }
  }
  return out;
}

void log_line(const std::string& msg) { std::cerr << "[tonlab] " << msg << std::endl; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Thought-dropout warm start and GRPO on synthetic tasks"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Write oracle tasks as JSONL");
  std::string gen_kind = "count", gen_difficulty, gen_out;
  int gen_n = 1000;
  std::uint64_t gen_seed = 1000;
  bool gen_hybrid = false;
  gen->add_option("--kind", gen_kind, "count | chain_arith | grid_nav")->required();
  gen->add_option("--n", gen_n, "Number of tasks")->check(CLI::PositiveNumber);
  gen->add_option("--difficulty", gen_difficulty, "JSON object, e.g. {\"max_items\": 9}");
  gen->add_option("--seed", gen_seed, "First task seed");
  gen->add_option("--out", gen_out, "Output JSONL path")->required();
  gen->add_flag("--hybrid", gen_hybrid, "Prefix the hybrid hint to every prompt");

  // sft
  auto* sft = app.add_subcommand("sft", "Warm-start a fresh policy on a corpus");
  std::string sft_corpus, sft_config, sft_out;
  sft->add_option("--corpus", sft_corpus, "Corpus JSONL from gen-data")->required();
  sft->add_option("--config", sft_config, "Arm config JSON (policy, sft, seeds)");
  sft->add_option("--out", sft_out, "Output checkpoint path")->required();
  sft->allow_extras();

  // grpo
  auto* grpo = app.add_subcommand("grpo", "Run GRPO from a checkpoint");
  std::string grpo_ckpt, grpo_config, grpo_tasks, grpo_out;
  grpo->add_option("--checkpoint", grpo_ckpt, "Starting checkpoint")->required();
  grpo->add_option("--config", grpo_config, "Arm config JSON (task, difficulty, grpo, seeds)");
  grpo->add_option("--tasks", grpo_tasks, "Optional task JSONL, cycled in order");
  grpo->add_option("--out", grpo_out, "Output directory")->required();
  grpo->allow_extras();

  // eval
  auto* ev = app.add_subcommand("eval", "Greedy evaluation of a checkpoint");
  std::string ev_ckpt, ev_kind = "count", ev_difficulty;
  int ev_n = 200, ev_max = 64;
  std::uint64_t ev_seed = 900000;
  bool ev_hybrid = false;
  double ev_theta = RewardConfig{}.theta;
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint to evaluate")->required();
  ev->add_option("--kind", ev_kind, "count | chain_arith | grid_nav")->required();
  ev->add_option("--n", ev_n, "Tasks, or episodes for grid_nav")->check(CLI::PositiveNumber);
  ev->add_option("--seed", ev_seed, "First task seed");
  ev->add_option("--difficulty", ev_difficulty, "JSON object");
  ev->add_option("--max-completion", ev_max, "Token budget per response");
  ev->add_option("--theta", ev_theta, "Click tolerance");
  ev->add_flag("--hybrid", ev_hybrid, "Prefix the hybrid hint");

  // run-arm
  auto* arm = app.add_subcommand("run-arm", "Warm start, GRPO and evaluation into one run directory");
  std::string arm_config;
  bool arm_print = false;
  arm->add_option("--config", arm_config, "Arm config JSON; fields overridable as --section.field value");
  arm->add_flag("--print-config", arm_print, "Print the resolved config and exit");
  arm->allow_extras();

  // report
  auto* rep = app.add_subcommand("report", "Compare run directories");
  std::vector<std::string> rep_runs;
  std::string rep_out;
  int rep_window = 0;
  rep->add_option("--runs", rep_runs, "Run directories")->required();
  rep->add_option("--out", rep_out, "Output prefix for .csv and .json (default: stdout)");
  rep->add_option("--moving-average", rep_window, "Trailing window, 0 disables")->check(CLI::NonNegativeNumber);

  // score
  auto* score = app.add_subcommand("score", "Score a completion against a task");
  std::string sc_prompt, sc_completion, sc_kind = "count", sc_difficulty, sc_in, sc_out;
  std::uint64_t sc_seed = 0;
  score->add_option("--prompt", sc_prompt, "Prompt token names; overrides --kind/--seed");
  score->add_option("--kind", sc_kind, "Task kind to generate");
  score->add_option("--seed", sc_seed, "Task seed to generate");
  score->add_option("--difficulty", sc_difficulty, "JSON object");
  score->add_option("--completion", sc_completion, "Completion token names");
  score->add_option("--in", sc_in, "JSONL of {prompt_tokens, completion_tokens[, truth]}");
  score->add_option("--out", sc_out, "Scored JSONL (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (gen->parsed()) {
      const TaskKind kind = task_kind_from_string(gen_kind);
      const Difficulty d = parse_difficulty(gen_difficulty);
      std::vector<TaskRecord> records;
      for (const TaskInstance& t : training_tasks(kind, d, gen_n, gen_seed, gen_hybrid)) {
        records.push_back(make_task_record(t));
      }
      write_task_records(gen_out, records);
      log_line("wrote " + std::to_string(records.size()) + " tasks to " + gen_out);
    } else if (sft->parsed()) {
      const ArmConfig cfg = load_config(sft_config, sft->remaining());
      std::vector<SftExample> corpus;
      for (const TaskRecord& r : read_task_records(sft_corpus)) corpus.push_back(to_sft_example(r));
      SftConfig sc = cfg.sft;
      sc.seed = cfg.seeds.sft;
      PolicyParams params = PolicyParams::init(cfg.policy, cfg.seeds.init);
      const SftReport report = sft_train(params, corpus, sc);
      for (const SftEpochStats& e : report.epochs) {
        std::cout << nlohmann::json{{"epoch", e.epoch}, {"mean_loss", e.mean_loss},
                                    {"skip_fraction", e.skip_fraction}}.dump()
                  << '\n';
      }
      save_checkpoint(params, sft_out);
    } else if (grpo->parsed()) {
      const ArmConfig cfg = load_config(grpo_config, grpo->remaining());
      PolicyParams params = load_checkpoint(grpo_ckpt);
      GrpoConfig gc = cfg.grpo;
      gc.seed = cfg.seeds.grpo;
      TaskStream stream;
      if (!grpo_tasks.empty()) {
        auto records = std::make_shared<std::vector<TaskRecord>>(read_task_records(grpo_tasks));
        if (records->empty()) throw UsageError(grpo_tasks + ": no tasks");
        const int per_step = gc.prompts_per_step;
        stream = [records, per_step](int step, int j) {
          const std::size_t index = static_cast<std::size_t>(step) * static_cast<std::size_t>(per_step) +
                                    static_cast<std::size_t>(j);
          return (*records)[index % records->size()].task;
        };
      } else {
        stream = generated_task_stream(cfg.task, cfg.difficulty, cfg.hybrid(), cfg.seeds.tasks,
                                       gc.prompts_per_step);
      }
      fs::create_directories(grpo_out);
      std::ofstream steps(fs::path(grpo_out) / "steps.jsonl");
      std::ofstream rewards(fs::path(grpo_out) / "step_rewards.jsonl");
      grpo_train(params, stream, gc, [&](const StepRecord& r, std::span<const GroupRollout> groups) {
        steps << to_json_line(r) << '\n' << std::flush;
        nlohmann::json all = nlohmann::json::array();
        for (const GroupRollout& g : groups) {
          for (double v : g.rewards) all.push_back(v);
        }
        rewards << nlohmann::json{{"step", r.step}, {"rewards", all}}.dump() << '\n' << std::flush;
      });
      save_checkpoint(params, (fs::path(grpo_out) / "final.ckpt.json").string());
    } else if (ev->parsed()) {
      EvalOptions opts;
      opts.difficulty = parse_difficulty(ev_difficulty);
      opts.hybrid = ev_hybrid;
      opts.max_completion = ev_max;
      opts.reward.theta = ev_theta;
      const PolicyParams params = load_checkpoint(ev_ckpt);
      std::cout << to_json(evaluate(params, task_kind_from_string(ev_kind), ev_n, ev_seed, opts)) << '\n';
    } else if (arm->parsed()) {
      const ArmConfig cfg = load_config(arm_config, arm->remaining());
      if (arm_print) {
        std::cout << to_json(cfg) << '\n';
        return 0;
      }
      const ArmResult res = run_arm(cfg, log_line);
      std::cout << read_file((fs::path(res.run_dir) / "summary.json").string());
    } else if (rep->parsed()) {
      ReportOptions opts;
      opts.moving_average = rep_window;
      const ReportOutput out = report(std::span<const std::string>(rep_runs), opts);
      if (rep_out.empty()) {
        std::cout << out.csv;
        std::cerr << out.summary_json << '\n';
      } else {
        std::ofstream(rep_out + ".csv") << out.csv;
        std::ofstream(rep_out + ".json") << out.summary_json << '\n';
        log_line("wrote " + rep_out + ".csv and " + rep_out + ".json");
      }
    } else if (score->parsed()) {
      auto breakdown_json = [](nlohmann::ordered_json& j, const RewardBreakdown& b) {
        j["r_f"] = b.r_f;
        j["r_d"] = b.r_d;
        j["r_c"] = b.r_c ? nlohmann::ordered_json(*b.r_c) : nullptr;
        j["total"] = b.total;
      };
      if (!sc_in.empty()) {
        std::ofstream file;
        if (!sc_out.empty()) file.open(sc_out);
        std::ostream& out = sc_out.empty() ? std::cout : file;
        const auto lines = read_lines(sc_in);
        for (std::size_t i = 0; i < lines.size(); ++i) {
          try {
            auto j = nlohmann::ordered_json::parse(lines[i]);
            const auto prompt = j.at("prompt_tokens").get<std::vector<int>>();
            TaskInstance task = make_instance(decode_prompt(prompt), !prompt.empty() && prompt[0] == tok::kHybridHint);
            if (j.contains("truth")) task.truth = answer_from_json(j["truth"].dump());
            const auto completion = j.at("completion_tokens").get<std::vector<int>>();
            breakdown_json(j, score_completion(task, completion, RewardConfig{}));
            out << j.dump() << '\n';
          } catch (const std::exception& e) {
            throw UsageError(sc_in + ": record " + std::to_string(i + 1) + ": " + e.what());
          }
        }
      } else {
        if (sc_completion.empty()) throw UsageError("score: give --completion or --in");
        TaskInstance task;
        if (!sc_prompt.empty()) {
          const auto prompt = parse_tokens(sc_prompt);
          task = make_instance(decode_prompt(prompt), !prompt.empty() && prompt[0] == tok::kHybridHint);
        } else {
          task = generate(task_kind_from_string(sc_kind), parse_difficulty(sc_difficulty), sc_seed);
        }
        nlohmann::ordered_json j;
        j["prompt"] = detokenize(task.prompt);
        breakdown_json(j, score_completion(task, parse_tokens(sc_completion), RewardConfig{}));
        std::cout << j.dump(2) << '\n';
      }
    }
  } catch (const TrainingAbort& e) {
    std::cerr << "training aborted: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
