#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tsc/experiment/config.hpp"
#include "tsc/lang/phase_language.hpp"
#include "tsc/ppo/trainer.hpp"

namespace tsc::experiment {

struct DecisionRecord {
  double time = 0.0;
  int chosen_phase = 0;
  std::vector<int> counts;  // empty for non-sampling controllers
  std::optional<double> p_chosen;
  double env = 0.0;
  double total = 0.0;
  bool gate_open = false;
};

nlohmann::json to_json(const DecisionRecord& record);
DecisionRecord decision_from_json(const nlohmann::json& doc);

struct Histogram {
  double bin_width = 0.5;
  std::map<long long, int> bins;  // floor(R_env / bin_width) -> count
  int decisions = 0;
  double hurdle = 0.0;
  double fraction_above = 0.0;  // share of decisions with R_env > hurdle
};

Histogram reward_histogram(std::span<const double> env_rewards, double hurdle,
                           double bin_width = 0.5);
// Reads a per-decision JSONL log. Throws ValidationError on malformed lines.
Histogram reward_histogram(const std::string& jsonl_path, double hurdle, double bin_width = 0.5);
nlohmann::json to_json(const Histogram& histogram);

struct EpisodeReport {
  int episode = 0;
  sim::Metrics metrics;
  std::vector<DecisionRecord> decisions;
  std::vector<ppo::UpdateStats> updates;
  std::vector<std::string> checkpoints;
  std::string decisions_path;
  std::string steps_path;
  Histogram histogram;
  double wall_seconds = 0.0;
};

// Seeds for everything random inside one episode.
struct EpisodeSeeds {
  std::uint64_t arrivals = 0;
  std::uint64_t responses = 0;
  std::uint64_t controller = 0;

  static EpisodeSeeds training(std::uint64_t run_seed, int episode);
  static EpisodeSeeds heldout(std::uint64_t run_seed);
};

// Owns the simulator description, the controller and, for the learned
// policy, the trainer, buffer and update rng that persist across episodes.
class Session {
 public:
  explicit Session(ExperimentConfig config);

  EpisodeReport run_episode(int episode, bool learn, const EpisodeSeeds& seeds,
                            const std::string& tag);

  const ExperimentConfig& config() const { return config_; }
  const sim::Topology& topology() const { return topology_; }
  const lang::Vocabulary& vocabulary() const { return vocab_; }
  bool has_policy() const { return trainer_.has_value(); }
  const ppo::Trainer& trainer() const;
  ppo::Trainer& mutable_trainer();
  const ppo::ReplayBuffer& buffer() const { return buffer_; }
  std::int64_t global_step() const { return global_step_; }
  const std::string& hash() const { return hash_; }

  ppo::Checkpoint make_checkpoint() const;
  void save_checkpoint(const std::string& path) const;
  // Restores trainer, buffer, update rng and step counter.
  void load_checkpoint(const std::string& path);

  // Greedy (argmax) response for a context; used to compare checkpoints.
  std::vector<int> greedy_response(std::span<const double> features) const;

 private:
  ExperimentConfig config_;
  sim::Topology topology_;
  sim::DemandProfile demand_;
  lang::Vocabulary vocab_;
  std::string hash_;
  std::optional<ppo::Trainer> trainer_;
  ppo::ReplayBuffer buffer_;
  Rng update_rng_;
  std::int64_t global_step_ = 0;
  std::unique_ptr<std::ofstream> training_log_file_;
  std::unique_ptr<ppo::TrainingLogWriter> training_log_;
};

struct TrainReport {
  std::vector<EpisodeReport> episodes;
  std::vector<double> heldout_queue;  // one per episode when enabled
  int best_episode = -1;
  std::string best_checkpoint;
  std::string final_checkpoint;
  int interval_checkpoints = 0;
  std::string config_hash;
};

// Runs config.episodes episodes (learning when the controller is the policy
// and config.learn is set). resume_from continues from an episode-boundary
// checkpoint.
TrainReport train(const ExperimentConfig& config, const std::string& resume_from = "");

// One non-learning episode on the held-out seeds, optionally from a checkpoint.
EpisodeReport evaluate(const ExperimentConfig& config, const std::string& checkpoint = "");

struct CompareRow {
  std::string name;
  std::optional<double> travel_time;
  double queue_length = 0.0;
  std::optional<double> delay_seconds;
  std::optional<double> delay_ratio;
  double throughput = 0.0;
  std::vector<double> seed_queues;
};

// Each entry runs its episodes under every seed; the row holds medians of
// the final-episode metrics. All entries must share topology and demand.
std::vector<CompareRow> compare(const std::vector<std::pair<std::string, ExperimentConfig>>& entries,
                                std::span<const std::uint64_t> seeds);
void write_compare_csv(std::ostream& out, std::span<const CompareRow> rows);

double median(std::vector<double> values);

}  // namespace tsc::experiment
