#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tsc/control/controllers.hpp"
#include "tsc/ppo/trainer.hpp"
#include "tsc/reward/reward.hpp"
#include "tsc/sim/intersection.hpp"

namespace tsc::experiment {

struct PolicyConfig {
  int embed = 16;
  int hidden = 64;
  int history = 4;
  int filler_count = 16;
  int max_response = 32;  // O
  double sampling_temperature = 1.0;
};

struct DemandConfig {
  double base_through = 0.05;
  double base_left = 0.03;
  double surge_factor = 1.8;
  // Explicit overrides of the generated profile.
  std::vector<sim::RateWindow> windows;
  std::vector<std::vector<double>> schedule;
  std::uint64_t rng_stream = 0;
};

struct ExperimentConfig {
  std::string topology_preset = "toy8";
  std::optional<sim::Topology> explicit_topology;
  DemandConfig demand;
  ppo::TrainerConfig trainer;
  reward::RewardConfig reward;
  PolicyConfig policy;
  control::Kind controller = control::Kind::Policy;
  double t_fixed = 10.0;
  int episodes = 1;
  std::string out;          // empty: nothing written to disk
  std::uint64_t seed = 0;
  // With the policy controller: false runs the initial weights frozen.
  bool learn = true;
  bool heldout_eval = true;
  bool write_steps = true;  // per-step CSV per episode

  void validate() const;

  sim::Topology topology() const;
  sim::DemandProfile demand_profile(const sim::Topology& topology) const;
};

// Strict parse: unknown keys are rejected with the offending key named.
// The seed is mandatory.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::string& path);
nlohmann::json to_json(const ExperimentConfig& config);

// Hash of the resolved configuration with run-identity fields (seed, out)
// removed, so seed sweeps share one hash.
std::string config_hash(const ExperimentConfig& config);

}  // namespace tsc::experiment
