#include "ton/arms.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <stdexcept>

#include "ton/jsonl.hpp"

namespace ton {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

std::string_view to_string(ArmKind arm) {
  switch (arm) {
    case ArmKind::kVanillaGrpo: return "vanilla_grpo";
    case ArmKind::kHybridPrompt: return "hybrid_prompt";
    case ArmKind::kTon: return "ton";
    case ArmKind::kTonSweep: return "ton_sweep";
    case ArmKind::kDifficultyAware: return "difficulty_aware";
  }
  return "ton";
}

ArmKind arm_kind_from_string(std::string_view name) {
  for (ArmKind a : {ArmKind::kVanillaGrpo, ArmKind::kHybridPrompt, ArmKind::kTon,
                    ArmKind::kTonSweep, ArmKind::kDifficultyAware}) {
    if (to_string(a) == name) return a;
  }
  throw std::invalid_argument("unknown arm: " + std::string(name));
}

void ArmConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("ArmConfig: " + what); };
  difficulty.validate(task);
  policy.validate();
  sft.validate();
  grpo.validate();
  if (corpus_size < 1) fail("corpus_size must be >= 1");
  if (probe_epochs < 1) fail("probe_epochs must be >= 1");
  if (eval_n < 1) fail("eval_n must be >= 1");
  if (eval_every < 0) fail("eval_every must be >= 0");
  if (eval_max_completion < 1) fail("eval_max_completion must be >= 1");
  if (final_window < 1) fail("final_window must be >= 1");
  if (out_dir.empty()) fail("out_dir must be set");

  const bool aware = sft.dropout_mode == DropoutMode::kDifficultyAware;
  if (aware != (arm == ArmKind::kDifficultyAware)) {
    fail("dropout_mode difficulty_aware belongs to the difficulty_aware arm only");
  }
  if ((arm == ArmKind::kVanillaGrpo || arm == ArmKind::kHybridPrompt) && sft.dropout_prob != 0.0) {
    fail(std::string(to_string(arm)) + " requires sft.dropout_prob 0");
  }
  if (arm == ArmKind::kTonSweep && sft.dropout_prob != 0.2 && sft.dropout_prob != 0.5 &&
      sft.dropout_prob != 0.8) {
    fail("ton_sweep requires sft.dropout_prob in {0.2, 0.5, 0.8}");
  }
}

ArmConfig arm_preset(ArmKind arm, TaskKind task) {
  ArmConfig c;
  c.arm = arm;
  c.task = task;
  c.out_dir = "runs/" + std::string(to_string(arm)) + "_" + std::string(to_string(task));

  c.sft.epochs = 14;
  c.sft.batch_size = 32;
  c.sft.optimizer.kind = OptimizerKind::kAdam;
  c.sft.optimizer.learning_rate = 0.002;
  c.sft.dropout_prob = 0.5;
  if (arm == ArmKind::kVanillaGrpo || arm == ArmKind::kHybridPrompt) c.sft.dropout_prob = 0.0;
  if (arm == ArmKind::kDifficultyAware) c.sft.dropout_mode = DropoutMode::kDifficultyAware;

  c.grpo.steps = 400;
  c.grpo.prompts_per_step = 2;
  c.grpo.max_completion = 64;
  c.grpo.optimizer.kind = OptimizerKind::kSgd;
  c.grpo.optimizer.learning_rate = 0.02;
  c.grpo.optimizer.max_grad_norm = 1.0;

  // Ranges and schedules tuned per task at the default policy size.
  switch (task) {
    case TaskKind::kCount: c.difficulty.max_items = 9; break;
    case TaskKind::kChainArith:
      c.difficulty.max_ops = 4;
      c.sft.epochs = 50;
      c.sft.optimizer.learning_rate = 0.001;
      c.grpo.group_size = 4;
      break;
    case TaskKind::kGridNav:
      c.difficulty.max_grid = 7;
      c.sft.epochs = 30;
      c.sft.optimizer.learning_rate = 0.001;
      break;
  }
  return c;
}

// ---------------------------------------------------------------- JSON

namespace {

json optimizer_json(const OptimizerConfig& o) {
  return {{"kind", std::string(to_string(o.kind))},
          {"learning_rate", o.learning_rate},
          {"beta1", o.beta1},
          {"beta2", o.beta2},
          {"eps", o.eps},
          {"max_grad_norm", o.max_grad_norm}};
}

OptimizerConfig optimizer_from(const json& j) {
  OptimizerConfig o;
  o.kind = optimizer_kind_from_string(j.at("kind").get<std::string>());
  o.learning_rate = j.at("learning_rate").get<double>();
  o.beta1 = j.at("beta1").get<double>();
  o.beta2 = j.at("beta2").get<double>();
  o.eps = j.at("eps").get<double>();
  o.max_grad_norm = j.at("max_grad_norm").get<double>();
  return o;
}

json config_json(const ArmConfig& c) {
  json j;
  j["arm"] = std::string(to_string(c.arm));
  j["task"] = std::string(to_string(c.task));
  j["difficulty"] = {{"min_items", c.difficulty.min_items}, {"max_items", c.difficulty.max_items},
                     {"min_ops", c.difficulty.min_ops},     {"max_ops", c.difficulty.max_ops},
                     {"min_grid", c.difficulty.min_grid},   {"max_grid", c.difficulty.max_grid}};
  j["policy"] = {{"vocab_size", c.policy.vocab_size}, {"embed_dim", c.policy.embed_dim},
                 {"n_layers", c.policy.n_layers},     {"n_heads", c.policy.n_heads},
                 {"max_context", c.policy.max_context}, {"mlp_hidden", c.policy.mlp_hidden},
                 {"init_std", c.policy.init_std}};
  j["corpus_size"] = c.corpus_size;
  j["sft"] = {{"dropout_prob", c.sft.dropout_prob},
              {"dropout_mode", std::string(to_string(c.sft.dropout_mode))},
              {"epochs", c.sft.epochs},
              {"batch_size", c.sft.batch_size},
              {"optimizer", optimizer_json(c.sft.optimizer)}};
  j["probe_epochs"] = c.probe_epochs;
  const GrpoConfig& g = c.grpo;
  j["grpo"] = {{"group_size", g.group_size},
               {"clip_eps", g.clip_eps},
               {"kl_coef", g.kl_coef},
               {"steps", g.steps},
               {"temperature", g.temperature},
               {"max_completion", g.max_completion},
               {"prompts_per_step", g.prompts_per_step},
               {"length_normalize", g.length_normalize},
               {"collapse_window", g.collapse_window},
               {"optimizer", optimizer_json(g.optimizer)},
               {"reward",
                {{"theta", g.reward.theta},
                 {"format_weight", g.reward.format_weight},
                 {"discrete_weight", g.reward.discrete_weight},
                 {"continuous_weight", g.reward.continuous_weight}}}};
  j["eval_n"] = c.eval_n;
  j["eval_every"] = c.eval_every;
  j["eval_max_completion"] = c.eval_max_completion;
  j["final_window"] = c.final_window;
  j["seeds"] = {{"init", c.seeds.init}, {"data", c.seeds.data},   {"sft", c.seeds.sft},
                {"grpo", c.seeds.grpo}, {"tasks", c.seeds.tasks}, {"eval", c.seeds.eval}};
  j["out_dir"] = c.out_dir;
  return j;
}

ArmConfig config_from(const json& j) {
  ArmConfig c;
  c.arm = arm_kind_from_string(j.at("arm").get<std::string>());
  c.task = task_kind_from_string(j.at("task").get<std::string>());
  const json& d = j.at("difficulty");
  c.difficulty = {d.at("min_items").get<int>(), d.at("max_items").get<int>(),
                  d.at("min_ops").get<int>(),   d.at("max_ops").get<int>(),
                  d.at("min_grid").get<int>(),  d.at("max_grid").get<int>()};
  const json& p = j.at("policy");
  c.policy.vocab_size = p.at("vocab_size").get<int>();
  c.policy.embed_dim = p.at("embed_dim").get<int>();
  c.policy.n_layers = p.at("n_layers").get<int>();
  c.policy.n_heads = p.at("n_heads").get<int>();
  c.policy.max_context = p.at("max_context").get<int>();
  c.policy.mlp_hidden = p.at("mlp_hidden").get<int>();
  c.policy.init_std = p.at("init_std").get<double>();
  c.corpus_size = j.at("corpus_size").get<int>();
  const json& s = j.at("sft");
  c.sft.dropout_prob = s.at("dropout_prob").get<double>();
  c.sft.dropout_mode = dropout_mode_from_string(s.at("dropout_mode").get<std::string>());
  c.sft.epochs = s.at("epochs").get<int>();
  c.sft.batch_size = s.at("batch_size").get<int>();
  c.sft.optimizer = optimizer_from(s.at("optimizer"));
  c.probe_epochs = j.at("probe_epochs").get<int>();
  const json& g = j.at("grpo");
  c.grpo.group_size = g.at("group_size").get<int>();
  c.grpo.clip_eps = g.at("clip_eps").get<double>();
  c.grpo.kl_coef = g.at("kl_coef").get<double>();
  c.grpo.steps = g.at("steps").get<int>();
  c.grpo.temperature = g.at("temperature").get<double>();
  c.grpo.max_completion = g.at("max_completion").get<int>();
  c.grpo.prompts_per_step = g.at("prompts_per_step").get<int>();
  c.grpo.length_normalize = g.at("length_normalize").get<bool>();
  c.grpo.collapse_window = g.at("collapse_window").get<int>();
  c.grpo.optimizer = optimizer_from(g.at("optimizer"));
  const json& r = g.at("reward");
  c.grpo.reward.theta = r.at("theta").get<double>();
  c.grpo.reward.format_weight = r.at("format_weight").get<double>();
  c.grpo.reward.discrete_weight = r.at("discrete_weight").get<double>();
  c.grpo.reward.continuous_weight = r.at("continuous_weight").get<double>();
  c.eval_n = j.at("eval_n").get<int>();
  c.eval_every = j.at("eval_every").get<int>();
  c.eval_max_completion = j.at("eval_max_completion").get<int>();
  c.final_window = j.at("final_window").get<int>();
  const json& sd = j.at("seeds");
  c.seeds = {sd.at("init").get<std::uint64_t>(), sd.at("data").get<std::uint64_t>(),
             sd.at("sft").get<std::uint64_t>(),  sd.at("grpo").get<std::uint64_t>(),
             sd.at("tasks").get<std::uint64_t>(), sd.at("eval").get<std::uint64_t>()};
  c.out_dir = j.at("out_dir").get<std::string>();
  return c;
}

// Rejects keys the schema does not have, so typos fail loudly.
void check_known(const json& schema, const json& given, const std::string& prefix) {
  if (!given.is_object()) throw std::invalid_argument("config: " + prefix + " must be an object");
  for (const auto& [key, value] : given.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!schema.contains(key)) throw std::invalid_argument("config: unknown field " + path);
    if (schema[key].is_object()) check_known(schema[key], value, path);
  }
}

json parse_value(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception&) {
    return text;
  }
}

}  // namespace

std::string to_json(const ArmConfig& cfg) { return config_json(cfg).dump(2); }

ArmConfig arm_config_from_json(std::string_view text,
                               std::span<const std::pair<std::string, std::string>> overrides) {
  try {
    json given = text.empty() ? json::object() : json::parse(text);
    if (!given.is_object()) throw std::invalid_argument("config: top level must be an object");
    json head = given;
    for (const auto& [path, value] : overrides) {
      if (path == "arm" || path == "task") head[path] = parse_value(value);
    }
    const ArmKind arm = arm_kind_from_string(head.value("arm", std::string("ton")));
    const TaskKind task = task_kind_from_string(head.value("task", std::string("count")));

    json merged = config_json(arm_preset(arm, task));
    check_known(merged, given, "");
    merged.merge_patch(given);
    for (const auto& [path, value] : overrides) {
      json* node = &merged;
      std::size_t begin = 0;
      while (true) {
        const std::size_t dot = path.find('.', begin);
        const std::string key = path.substr(begin, dot == std::string::npos ? dot : dot - begin);
        if (!node->is_object() || !node->contains(key)) {
          throw std::invalid_argument("config: unknown field " + path);
        }
        node = &(*node)[key];
        if (dot == std::string::npos) break;
        begin = dot + 1;
      }
      if (node->is_object()) throw std::invalid_argument("config: " + path + " is a section");
      *node = parse_value(value);
    }
    ArmConfig cfg = config_from(merged);
    cfg.validate();
    return cfg;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
}

// ---------------------------------------------------------------- running

TaskStream generated_task_stream(TaskKind kind, const Difficulty& difficulty, bool hybrid,
                                 std::uint64_t seed, int prompts_per_step) {
  difficulty.validate(kind);
  return [=](int step, int j) {
    const auto index = static_cast<std::uint64_t>(step) * static_cast<std::uint64_t>(prompts_per_step) +
                       static_cast<std::uint64_t>(j);
    const std::uint64_t s = mix_seed(seed, index);
    TaskInstance t = generate(kind, difficulty, s, hybrid);
    if (kind != TaskKind::kGridNav) return t;
    // A uniformly chosen state of the oracle episode, as in the warm start.
    const auto states = oracle_trajectory(std::get<GridState>(t.meta));
    GridState g = states[mix_seed(s) % states.size()];
    g.step_index = 0;
    TaskInstance inst = make_instance(g, hybrid);
    inst.seed = s;
    inst.difficulty = difficulty;
    return inst;
  };
}

void probe_base_correct(const PolicyParams& policy, TaskKind kind, std::span<SftExample> corpus,
                        int max_completion) {
  DecodingConfig dc;
  dc.greedy = true;
  dc.max_new_tokens = max_completion;
  for (SftExample& ex : corpus) {
    const Completion c = sample(policy, ex.prompt, dc, 0);
    const ParseResult pr = parse(c.tokens);
    bool ok = false;
    if (const auto* resp = std::get_if<Response>(&pr)) {
      const auto pred = decode_answer(kind, resp->answer);
      const auto truth = decode_answer(kind, ex.answer);
      ok = pred && truth && discrete_reward(*pred, *truth) == 1;
    }
    ex.base_correct = ok;
  }
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text << '\n';
}

json eval_json(const EvalReport& r) { return json::parse(to_json(r)); }

double headline_accuracy(const EvalReport& r) {
  if (r.accuracy) return *r.accuracy;
  return r.task_success.value_or(0.0);
}

json summary_json(const ArmConfig& cfg, const ArmResult& res, const std::string& status,
                  const std::string& error, bool finished) {
  json j;
  j["arm"] = std::string(to_string(cfg.arm));
  j["task"] = std::string(to_string(cfg.task));
  j["status"] = status;
  j["error"] = error.empty() ? json(nullptr) : json(error);
  j["steps"] = res.steps.size();
  if (finished) {
    j["final_accuracy"] = headline_accuracy(res.final_eval);
    j["final_length"] = res.final_eval.mean_task_output_len;
    j["final_skip_ratio"] = res.final_eval.skip_ratio;
    j["final_eval"] = eval_json(res.final_eval);
  } else {
    j["final_accuracy"] = nullptr;
    j["final_length"] = nullptr;
    j["final_skip_ratio"] = nullptr;
    j["final_eval"] = nullptr;
  }
  // Training-curve tail over the last final_window steps.
  const std::size_t n = res.steps.size();
  const std::size_t w = std::min<std::size_t>(n, static_cast<std::size_t>(cfg.final_window));
  if (w > 0) {
    double len = 0.0, skip = 0.0, reward = 0.0, think = 0.0;
    int think_n = 0;
    for (std::size_t i = n - w; i < n; ++i) {
      len += res.steps[i].completion_len_mean;
      skip += res.steps[i].skip_ratio;
      reward += res.steps[i].reward_mean;
      if (res.steps[i].think_len_mean) {
        think += *res.steps[i].think_len_mean;
        ++think_n;
      }
    }
    const auto wd = static_cast<double>(w);
    j["train_tail"] = {{"window", w},
                       {"reward_mean", reward / wd},
                       {"skip_ratio", skip / wd},
                       {"completion_len_mean", len / wd},
                       {"think_len_mean", think_n ? json(think / think_n) : json(nullptr)}};
  } else {
    j["train_tail"] = nullptr;
  }
  j["sft_seconds"] = res.sft_seconds;
  j["grpo_seconds"] = res.grpo_seconds;
  j["wall_time"] = res.wall_seconds;
  return j;
}

}  // namespace

ArmResult run_arm(const ArmConfig& config, const ArmLog& log) {
  config.validate();
  ArmConfig cfg = config;
  cfg.sft.seed = cfg.seeds.sft;
  cfg.grpo.seed = cfg.seeds.grpo;
  auto say = [&](const std::string& msg) {
    if (log) log(msg);
  };
  const auto start = Clock::now();
  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);

  ArmResult res;
  res.run_dir = dir.string();
  write_file(dir / "config.json", to_json(cfg));
  write_file(dir / "vocab.json", vocab_manifest_json());

  EvalOptions eval_opts;
  eval_opts.difficulty = cfg.difficulty;
  eval_opts.hybrid = cfg.hybrid();
  eval_opts.max_completion = cfg.eval_max_completion;
  eval_opts.reward = cfg.grpo.reward;

  // Warm-start corpus from the oracle.
  std::vector<TaskRecord> records;
  records.reserve(static_cast<std::size_t>(cfg.corpus_size));
  for (const TaskInstance& t :
       training_tasks(cfg.task, cfg.difficulty, cfg.corpus_size, cfg.seeds.data, cfg.hybrid())) {
    records.push_back(make_task_record(t));
  }
  std::vector<SftExample> corpus;
  corpus.reserve(records.size());
  for (const TaskRecord& r : records) corpus.push_back(to_sft_example(r));

  if (cfg.sft.dropout_mode == DropoutMode::kDifficultyAware) {
    say("probe warm start (" + std::to_string(cfg.probe_epochs) + " epochs, no dropout)");
    PolicyParams probe = PolicyParams::init(cfg.policy, cfg.seeds.init);
    SftConfig probe_cfg = cfg.sft;
    probe_cfg.dropout_mode = DropoutMode::kRandom;
    probe_cfg.dropout_prob = 0.0;
    probe_cfg.epochs = cfg.probe_epochs;
    sft_train(probe, corpus, probe_cfg);
    probe_base_correct(probe, cfg.task, corpus, cfg.eval_max_completion);
    for (std::size_t i = 0; i < corpus.size(); ++i) records[i].base_correct = corpus[i].base_correct;
  }
  write_task_records((dir / "corpus.jsonl").string(), records);

  PolicyParams params = PolicyParams::init(cfg.policy, cfg.seeds.init);
  std::ofstream steps_out(dir / "steps.jsonl");
  std::ofstream rewards_out(dir / "step_rewards.jsonl");
  if (!steps_out || !rewards_out) throw std::runtime_error("cannot write step logs in " + dir.string());

  bool finished = false;
  try {
    say("warm start: " + std::to_string(cfg.sft.epochs) + " epochs on " +
        std::to_string(corpus.size()) + " examples, dropout " + std::to_string(cfg.sft.dropout_prob));
    const auto sft_start = Clock::now();
    res.sft = sft_train(params, corpus, cfg.sft);
    res.sft_seconds = seconds_since(sft_start);
    json sft_report = json::array();
    for (const SftEpochStats& e : res.sft.epochs) {
      sft_report.push_back(
          {{"epoch", e.epoch}, {"mean_loss", e.mean_loss}, {"skip_fraction", e.skip_fraction}});
    }
    write_file(dir / "sft_report.json", sft_report.dump(2));
    save_checkpoint(params, (dir / "sft.ckpt.json").string());
    res.sft_eval = evaluate(params, cfg.task, cfg.eval_n, cfg.seeds.eval, eval_opts);
    write_file(dir / "eval_sft.json", to_json(res.sft_eval));
    say("after warm start: accuracy " + std::to_string(headline_accuracy(res.sft_eval)) +
        ", skip " + std::to_string(res.sft_eval.skip_ratio));

    const auto grpo_start = Clock::now();
    const TaskStream stream = generated_task_stream(cfg.task, cfg.difficulty, cfg.hybrid(),
                                                    cfg.seeds.tasks, cfg.grpo.prompts_per_step);
    auto observer = [&](const StepRecord& record, std::span<const GroupRollout> groups) {
      res.steps.push_back(record);
      steps_out << to_json_line(record) << '\n' << std::flush;
      json rewards = json::array();
      for (const GroupRollout& g : groups) {
        for (double r : g.rewards) rewards.push_back(r);
      }
      rewards_out << json{{"step", record.step}, {"rewards", rewards}}.dump() << '\n' << std::flush;
      const int done = record.step + 1;
      if (cfg.eval_every > 0 && done % cfg.eval_every == 0 && done < cfg.grpo.steps) {
        const EvalReport mid = evaluate(params, cfg.task, cfg.eval_n, cfg.seeds.eval, eval_opts);
        write_file(dir / ("eval_step_" + std::to_string(done) + ".json"), to_json(mid));
      }
      if (done % 50 == 0) {
        say("step " + std::to_string(done) + ": reward " + std::to_string(record.reward_mean) +
            ", skip " + std::to_string(record.skip_ratio) + ", length " +
            std::to_string(record.completion_len_mean));
      }
    };
    grpo_train(params, stream, cfg.grpo, observer);
    res.grpo_seconds = seconds_since(grpo_start);
    save_checkpoint(params, (dir / "final.ckpt.json").string());
    res.final_eval = evaluate(params, cfg.task, cfg.eval_n, cfg.seeds.eval, eval_opts);
    write_file(dir / "eval_final.json", to_json(res.final_eval));
    finished = true;
  } catch (const TrainingAbort& e) {
    res.wall_seconds = seconds_since(start);
    write_file(dir / "summary.json", summary_json(cfg, res, "aborted", e.what(), false).dump(2));
    throw;
  }
  res.wall_seconds = seconds_since(start);
  write_file(dir / "summary.json", summary_json(cfg, res, "ok", "", finished).dump(2));
  return res;
}

}  // namespace ton
