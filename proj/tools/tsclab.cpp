// tsclab: train, evaluate and compare intersection controllers.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "tsc/common/error.hpp"
#include "tsc/experiment/runner.hpp"

using nlohmann::json;
namespace ex = tsc::experiment;

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> episodes;
  std::optional<std::string> controller;
};

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw tsc::IoError("cannot open config '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw tsc::ValidationError("config: '" + path + "' is not valid JSON: " + e.what());
  }
}

ex::ExperimentConfig resolve(const Overrides& o, const std::string& config_path) {
  json doc = config_path.empty() ? json::object() : read_json(config_path);
  if (o.seed) doc["seed"] = *o.seed;
  if (o.out) doc["out"] = *o.out;
  if (o.episodes) doc["episodes"] = *o.episodes;
  if (o.controller) doc["controller"] = *o.controller;
  return ex::parse_config(doc);
}

json metrics_json(const tsc::sim::Metrics& m) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  return {{"travel_time", opt(m.travel_time)},
          {"queue_length", m.queue_length},
          {"delay_seconds", opt(m.delay_seconds)},
          {"delay_ratio", opt(m.delay_ratio)},
          {"throughput", m.throughput},
          {"injected", m.injected}};
}

json episode_json(const ex::EpisodeReport& r) {
  return {{"episode", r.episode},
          {"metrics", metrics_json(r.metrics)},
          {"decisions", r.decisions.size()},
          {"updates", r.updates.size()},
          {"checkpoints", r.checkpoints.size()},
          {"fraction_above_hurdle", r.histogram.fraction_above},
          {"decisions_path", r.decisions_path},
          {"wall_seconds", r.wall_seconds}};
}

void add_common(CLI::App* cmd, Overrides& o, bool with_controller = true) {
  cmd->add_option("--config", o.config, "Experiment config (JSON)");
  cmd->add_option("--seed", o.seed, "Run seed (overrides the config)");
  cmd->add_option("--out", o.out, "Output directory (overrides the config)");
  cmd->add_option("--episodes", o.episodes, "Episode count (overrides the config)");
  if (with_controller)
    cmd->add_option("--controller", o.controller, "Controller kind")
        ->check(CLI::IsMember({"policy", "fixed", "maxpressure", "random"}));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Traffic-signal control lab: token-policy PPO and reference controllers"};
  app.require_subcommand(1);

  Overrides train_o, eval_o, base_o, cmp_o;
  std::string resume, checkpoint;

  auto* train_cmd = app.add_subcommand("train", "Train the token policy");
  add_common(train_cmd, train_o);
  train_cmd->add_option("--resume", resume, "Continue from an episode-boundary checkpoint");

  auto* eval_cmd = app.add_subcommand("eval", "Run one held-out episode without learning");
  add_common(eval_cmd, eval_o);
  eval_cmd->add_option("--checkpoint", checkpoint, "Policy checkpoint to load");

  auto* base_cmd = app.add_subcommand("baseline", "Run a non-learning controller");
  add_common(base_cmd, base_o);

  auto* cmp_cmd = app.add_subcommand("compare", "Median final-episode metrics over seeds");
  std::vector<std::string> cmp_configs;
  std::vector<std::uint64_t> cmp_seeds{1, 2, 3, 4, 5};
  cmp_cmd->add_option("--config", cmp_configs, "NAME=PATH or PATH, repeatable")->required();
  cmp_cmd->add_option("--seeds", cmp_seeds, "Seeds to aggregate over")->delimiter(',');
  cmp_cmd->add_option("--out", cmp_o.out, "Write compare.csv and run outputs here");
  cmp_cmd->add_option("--episodes", cmp_o.episodes, "Episode count for every config");

  auto* hist_cmd = app.add_subcommand("reward-hist", "Histogram of decision rewards from JSONL logs");
  std::vector<std::string> logs;
  double hurdle = 3.0, bin_width = 0.5;
  hist_cmd->add_option("--log", logs, "Per-decision JSONL log, repeatable")->required();
  hist_cmd->add_option("--hurdle", hurdle, "Hurdle rate");
  hist_cmd->add_option("--bin-width", bin_width, "Bin width in vehicles");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) {
      const ex::ExperimentConfig cfg = resolve(train_o, train_o.config);
      const ex::TrainReport r = ex::train(cfg, resume);
      json eps = json::array();
      for (const auto& e : r.episodes) eps.push_back(episode_json(e));
      std::cout << json{{"config_hash", r.config_hash},
                        {"episodes", eps},
                        {"heldout_queue", r.heldout_queue},
                        {"best_episode", r.best_episode},
                        {"best_checkpoint", r.best_checkpoint},
                        {"final_checkpoint", r.final_checkpoint},
                        {"interval_checkpoints", r.interval_checkpoints}}
                       .dump(2)
                << '\n';
    } else if (*eval_cmd) {
      const ex::ExperimentConfig cfg = resolve(eval_o, eval_o.config);
      std::cout << episode_json(ex::evaluate(cfg, checkpoint)).dump(2) << '\n';
    } else if (*base_cmd) {
      if (!base_o.controller) base_o.controller = "maxpressure";
      if (*base_o.controller == "policy")
        throw tsc::ValidationError("baseline: --controller must be fixed, maxpressure or random");
      const ex::ExperimentConfig cfg = resolve(base_o, base_o.config);
      const ex::TrainReport r = ex::train(cfg);
      json eps = json::array();
      for (const auto& e : r.episodes) eps.push_back(episode_json(e));
      std::cout << json{{"config_hash", r.config_hash}, {"episodes", eps}}.dump(2) << '\n';
    } else if (*cmp_cmd) {
      std::vector<std::pair<std::string, ex::ExperimentConfig>> entries;
      for (const std::string& entry : cmp_configs) {
        const auto eq = entry.find('=');
        const std::string name =
            eq == std::string::npos ? std::filesystem::path(entry).stem().string() : entry.substr(0, eq);
        const std::string path = eq == std::string::npos ? entry : entry.substr(eq + 1);
        Overrides o = cmp_o;
        o.seed = cmp_seeds.empty() ? 0 : cmp_seeds.front();
        entries.emplace_back(name, resolve(o, path));
      }
      const auto rows = ex::compare(entries, cmp_seeds);
      ex::write_compare_csv(std::cout, rows);
      if (cmp_o.out) {
        std::filesystem::create_directories(*cmp_o.out);
        std::ofstream f(std::filesystem::path(*cmp_o.out) / "compare.csv");
        ex::write_compare_csv(f, rows);
      }
    } else if (*hist_cmd) {
      json out = json::array();
      for (const std::string& path : logs) {
        json h = ex::to_json(ex::reward_histogram(path, hurdle, bin_width));
        h["log"] = path;
        out.push_back(h);
      }
      std::cout << out.dump(2) << '\n';
    }
  } catch (const tsc::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const tsc::IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
